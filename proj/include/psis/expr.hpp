#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "psis/error.hpp"

namespace psis::sym {

enum class Op : std::uint8_t {
  Const,
  Var,   // state variable x_j, 1-based
  Time,  // t
  Add,
  Sub,
  Mul,
  Div,
  Pow,  // base ^ real exponent (exponent stored in the node)
  Neg,
  Sin,
  Cos,
  Tan,
  Arctan,
  Exp,
  Ln,
  Abs,
  Sign,
};

std::string_view op_name(Op op);
bool is_unary(Op op);
bool is_binary(Op op);

/// Singular evaluation (division by zero, log of a non-positive value,
/// non-finite result). Carries the node kind that failed.
class EvalError : public Error {
 public:
  EvalError(Op op, const std::string& what) : Error(what), op_(op) {}
  Op op() const noexcept { return op_; }

 private:
  Op op_;
};

/// Raised by lie_derivative when an expression depends on x_n, whose time
/// derivative (the input u) is not known symbolically.
class StructureError : public Error {
 public:
  using Error::Error;
};

struct Node;
struct ExprAccess;

/// Immutable expression tree with shared subtrees. Copying is cheap.
class Expr {
 public:
  Expr();  // Const(0)

  static Expr constant(double value);
  static Expr var(int index);
  static Expr time();
  static Expr unary(Op op, Expr arg);
  static Expr binary(Op op, Expr lhs, Expr rhs);
  static Expr pow(Expr base, double exponent);

  Op op() const;
  /// Constant value for Const, exponent for Pow, 0 otherwise.
  double value() const;
  /// Variable index for Var, 0 otherwise.
  int index() const;
  /// First operand of unary/binary/Pow nodes.
  Expr lhs() const;
  /// Second operand of binary nodes.
  Expr rhs() const;

  bool is_const() const { return op() == Op::Const; }
  bool is_const(double v) const { return is_const() && value() == v; }

  std::size_t hash() const;
  const Node* node() const { return node_.get(); }

  /// Structural equality.
  friend bool operator==(const Expr& a, const Expr& b);

 private:
  friend struct ExprAccess;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator+(const Expr& a, double b);
Expr operator+(double a, const Expr& b);
Expr operator-(const Expr& a, double b);
Expr operator-(double a, const Expr& b);
Expr operator*(double a, const Expr& b);
Expr operator*(const Expr& a, double b);
Expr operator/(const Expr& a, double b);
Expr operator/(double a, const Expr& b);

Expr pow(const Expr& base, double exponent);
Expr sin(const Expr& e);
Expr cos(const Expr& e);
Expr tan(const Expr& e);
Expr atan(const Expr& e);
Expr exp(const Expr& e);
Expr log(const Expr& e);
Expr abs(const Expr& e);
Expr sign(const Expr& e);

struct EvalPoint {
  std::span<const double> x;
  double t = 0.0;
};

double eval(const Expr& e, const EvalPoint& p);

/// Largest state index referenced (0 when the expression is state-free).
int max_state_index(const Expr& e);

/// Number of distinct nodes (shared subtrees counted once).
std::size_t dag_size(const Expr& e);

/// Variable of differentiation: a state index (>= 1) or time.
struct Wrt {
  static Wrt state(int j) { return Wrt{j}; }
  static Wrt time() { return Wrt{0}; }
  bool is_time() const { return index == 0; }
  int index = 0;
};

/// Exact partial derivative. d|a| = sign(a) a', d sign(a) = 0.
Expr partial(const Expr& e, Wrt wrt);

/// Total time derivative along x_j' = x_{j+1}, j = 1..n-1:
/// sum_j (de/dx_j) x_{j+1} + de/dt.
/// Throws StructureError if e references x_n or beyond.
Expr lie_derivative(const Expr& e, int n);

/// Semantics-preserving rewrite: constant folding, 0/1 identities,
/// negation flattening and syntactic cancellation of e - e.
Expr simplify(const Expr& e);

/// Named replacement for a subexpression when printing.
struct Alias {
  Expr pattern;
  std::string name;
};

/// Infix rendering with explicit parentheses around every compound operand.
std::string to_string(const Expr& e, std::span<const Alias> aliases = {});

/// One product c * (num_1 ... num_k) / (den_1 ... den_m) of an expanded sum.
struct Term {
  double coef = 1.0;
  std::vector<Expr> num;
  std::vector<Expr> den;
};

/// Distributes products and quotients over sums. Like terms are not
/// collected. Anything equal to an entry of `atoms`, and any node that is not
/// a sum, product, quotient, negation or positive integer power, stays whole.
std::vector<Term> expand(const Expr& e, std::span<const Expr> atoms = {});
Expr to_expr(std::span<const Term> terms);
/// "c * a * b / (d * e) - ..." with repeated factors written as powers.
std::string to_string(std::span<const Term> terms, std::span<const Alias> aliases = {});

/// Flat instruction tape for fast repeated evaluation of several roots that
/// share subexpressions. Structurally identical subtrees are computed once.
class Program {
 public:
  Program() = default;
  explicit Program(std::span<const Expr> roots);

  std::size_t outputs() const { return roots_.size(); }
  std::size_t size() const { return tape_.size(); }
  int max_state_index() const { return max_state_; }

  /// Evaluates every root; `out` must have outputs() entries.
  void eval(std::span<const double> x, double t, std::span<double> out) const;

 private:
  struct Instr {
    Op op;
    std::uint32_t a;
    std::uint32_t b;
    double value;
  };
  std::vector<Instr> tape_;
  std::vector<std::uint32_t> roots_;
  int max_state_ = 0;
};

}  // namespace psis::sym
