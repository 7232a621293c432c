#include "psis/expr.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <unordered_set>

namespace psis::sym {

struct Node {
  Op op;
  double value;
  int index;
  std::shared_ptr<const Node> a;
  std::shared_ptr<const Node> b;
  std::size_t hash;
};

struct ExprAccess {
  static Expr wrap(std::shared_ptr<const Node> n) { return Expr(std::move(n)); }
  static const std::shared_ptr<const Node>& ptr(const Expr& e) { return e.node_; }
};

namespace {

std::size_t mix(std::size_t h, std::size_t v) {
  // splitmix64 finaliser folded into a running hash
  std::uint64_t z = static_cast<std::uint64_t>(h) ^ (static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL +
                                                     (static_cast<std::uint64_t>(h) << 6) +
                                                     (static_cast<std::uint64_t>(h) >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return static_cast<std::size_t>(z ^ (z >> 31));
}

std::size_t value_bits(double v) {
  if (v == 0.0) v = 0.0;  // +0 and -0 hash alike
  return static_cast<std::size_t>(std::bit_cast<std::uint64_t>(v));
}

Expr make_node(Op op, double value, int index, std::shared_ptr<const Node> a,
               std::shared_ptr<const Node> b) {
  std::size_t h = mix(static_cast<std::size_t>(op), value_bits(value));
  h = mix(h, static_cast<std::size_t>(index));
  if (a) h = mix(h, a->hash);
  if (b) h = mix(h, b->hash);
  return ExprAccess::wrap(std::make_shared<const Node>(Node{op, value, index, std::move(a), std::move(b), h}));
}

/// Applies one operation; throws EvalError on singular or non-finite results.
double apply(Op op, double a, double b, double value) {
  double r = 0.0;
  switch (op) {
    case Op::Const:
      return value;
    case Op::Var:
    case Op::Time:
      return a;
    case Op::Add:
      r = a + b;
      break;
    case Op::Sub:
      r = a - b;
      break;
    case Op::Mul:
      r = a * b;
      break;
    case Op::Div:
      if (b == 0.0) throw EvalError(op, "division by zero");
      r = a / b;
      break;
    case Op::Pow:
      if (a < 0.0 && value != std::trunc(value)) {
        throw EvalError(op, "negative base raised to a non-integer power");
      }
      if (a == 0.0 && value < 0.0) throw EvalError(op, "zero raised to a negative power");
      r = std::pow(a, value);
      break;
    case Op::Neg:
      r = -a;
      break;
    case Op::Sin:
      r = std::sin(a);
      break;
    case Op::Cos:
      r = std::cos(a);
      break;
    case Op::Tan:
      r = std::tan(a);
      break;
    case Op::Arctan:
      r = std::atan(a);
      break;
    case Op::Exp:
      r = std::exp(a);
      break;
    case Op::Ln:
      if (!(a > 0.0)) throw EvalError(op, "logarithm of a non-positive value");
      r = std::log(a);
      break;
    case Op::Abs:
      r = std::abs(a);
      break;
    case Op::Sign:
      r = a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
      break;
  }
  if (!std::isfinite(r)) {
    throw EvalError(op, std::string("non-finite result in ") + std::string(op_name(op)));
  }
  return r;
}

bool try_fold(Op op, double a, double b, double value, double& out) {
  try {
    out = apply(op, a, b, value);
    return true;
  } catch (const EvalError&) {
    return false;
  }
}

// Smart constructors: local rewrites shared by simplify() and partial().

Expr s_neg(const Expr& a);
Expr s_sub(const Expr& a, const Expr& b);

Expr s_add(const Expr& a, const Expr& b) {
  double r;
  if (a.is_const() && b.is_const() && try_fold(Op::Add, a.value(), b.value(), 0, r)) return Expr::constant(r);
  if (a.is_const(0.0)) return b;
  if (b.is_const(0.0)) return a;
  if (b.op() == Op::Neg) return s_sub(a, b.lhs());
  if (a.op() == Op::Neg) return s_sub(b, a.lhs());
  return Expr::binary(Op::Add, a, b);
}

Expr s_sub(const Expr& a, const Expr& b) {
  double r;
  if (a.is_const() && b.is_const() && try_fold(Op::Sub, a.value(), b.value(), 0, r)) return Expr::constant(r);
  if (b.is_const(0.0)) return a;
  if (a.is_const(0.0)) return s_neg(b);
  if (a == b) return Expr();
  if (b.op() == Op::Neg) return s_add(a, b.lhs());
  return Expr::binary(Op::Sub, a, b);
}

Expr s_mul(const Expr& a, const Expr& b) {
  double r;
  if (a.is_const() && b.is_const() && try_fold(Op::Mul, a.value(), b.value(), 0, r)) return Expr::constant(r);
  if (a.is_const(0.0) || b.is_const(0.0)) return Expr();
  if (a.is_const(1.0)) return b;
  if (b.is_const(1.0)) return a;
  if (a.is_const(-1.0)) return s_neg(b);
  if (b.is_const(-1.0)) return s_neg(a);
  if (a.op() == Op::Neg) return s_neg(s_mul(a.lhs(), b));
  if (b.op() == Op::Neg) return s_neg(s_mul(a, b.lhs()));
  if (b.is_const() && !a.is_const()) return s_mul(b, a);
  if (a.is_const() && b.op() == Op::Mul && b.lhs().is_const() &&
      try_fold(Op::Mul, a.value(), b.lhs().value(), 0, r)) {
    return s_mul(Expr::constant(r), b.rhs());
  }
  return Expr::binary(Op::Mul, a, b);
}

Expr s_div(const Expr& a, const Expr& b) {
  double r;
  if (a.is_const() && b.is_const() && try_fold(Op::Div, a.value(), b.value(), 0, r)) return Expr::constant(r);
  if (a.is_const(0.0)) return Expr();
  if (b.is_const(1.0)) return a;
  if (b.is_const(-1.0)) return s_neg(a);
  if (a.op() == Op::Neg) return s_neg(s_div(a.lhs(), b));
  if (b.op() == Op::Neg) return s_neg(s_div(a, b.lhs()));
  return Expr::binary(Op::Div, a, b);
}

Expr s_neg(const Expr& a) {
  if (a.is_const()) return Expr::constant(-a.value());
  if (a.op() == Op::Neg) return a.lhs();
  if (a.op() == Op::Sub) return Expr::binary(Op::Sub, a.rhs(), a.lhs());
  return Expr::unary(Op::Neg, a);
}

Expr s_pow(const Expr& a, double p) {
  double r;
  if (p == 0.0) return Expr::constant(1.0);
  if (p == 1.0) return a;
  if (a.is_const() && try_fold(Op::Pow, a.value(), 0, p, r)) return Expr::constant(r);
  return Expr::pow(a, p);
}

Expr s_unary(Op op, const Expr& a) {
  double r;
  if (a.is_const() && try_fold(op, a.value(), 0, 0, r)) return Expr::constant(r);
  if ((op == Op::Abs || op == Op::Sign) && a.op() == op) return a;
  return Expr::unary(op, a);
}

Expr rebuild(Op op, const Expr& a, const Expr& b, double value) {
  switch (op) {
    case Op::Add:
      return s_add(a, b);
    case Op::Sub:
      return s_sub(a, b);
    case Op::Mul:
      return s_mul(a, b);
    case Op::Div:
      return s_div(a, b);
    case Op::Pow:
      return s_pow(a, value);
    case Op::Neg:
      return s_neg(a);
    default:
      return s_unary(op, a);
  }
}

struct PairHash {
  std::size_t operator()(const std::pair<const Node*, const Node*>& p) const {
    return mix(std::hash<const Node*>{}(p.first), std::hash<const Node*>{}(p.second));
  }
};

bool structurally_equal(const Node* a, const Node* b,
                        std::unordered_set<std::pair<const Node*, const Node*>, PairHash>& proven) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->hash != b->hash || a->op != b->op || a->index != b->index) return false;
  if (value_bits(a->value) != value_bits(b->value)) return false;
  if (proven.contains({a, b})) return true;
  if (!structurally_equal(a->a.get(), b->a.get(), proven)) return false;
  if (!structurally_equal(a->b.get(), b->b.get(), proven)) return false;
  proven.insert({a, b});
  return true;
}

template <typename F>
void visit_dag(const Expr& e, F&& f) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{e.node()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!n || !seen.insert(n).second) continue;
    f(*n);
    stack.push_back(n->a.get());
    stack.push_back(n->b.get());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Expr

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Const:
      return "Const";
    case Op::Var:
      return "StateVar";
    case Op::Time:
      return "TimeVar";
    case Op::Add:
      return "Add";
    case Op::Sub:
      return "Sub";
    case Op::Mul:
      return "Mul";
    case Op::Div:
      return "Div";
    case Op::Pow:
      return "Pow";
    case Op::Neg:
      return "Neg";
    case Op::Sin:
      return "Sin";
    case Op::Cos:
      return "Cos";
    case Op::Tan:
      return "Tan";
    case Op::Arctan:
      return "Arctan";
    case Op::Exp:
      return "Exp";
    case Op::Ln:
      return "Ln";
    case Op::Abs:
      return "Abs";
    case Op::Sign:
      return "Sign";
  }
  return "?";
}

bool is_binary(Op op) { return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div; }

bool is_unary(Op op) { return op >= Op::Neg; }

Expr::Expr() {
  static const Expr zero = make_node(Op::Const, 0.0, 0, nullptr, nullptr);
  node_ = zero.node_;
}

Expr Expr::constant(double value) {
  if (!std::isfinite(value)) throw DomainError("expression constants must be finite");
  return make_node(Op::Const, value, 0, nullptr, nullptr);
}

Expr Expr::var(int index) {
  if (index < 1) throw DomainError("state variable indices are 1-based");
  return make_node(Op::Var, 0.0, index, nullptr, nullptr);
}

Expr Expr::time() { return make_node(Op::Time, 0.0, 0, nullptr, nullptr); }

Expr Expr::unary(Op op, Expr arg) {
  if (!is_unary(op)) throw DomainError("not a unary operation: " + std::string(op_name(op)));
  return make_node(op, 0.0, 0, arg.node_, nullptr);
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  if (!is_binary(op)) throw DomainError("not a binary operation: " + std::string(op_name(op)));
  return make_node(op, 0.0, 0, lhs.node_, rhs.node_);
}

Expr Expr::pow(Expr base, double exponent) {
  if (!std::isfinite(exponent)) throw DomainError("Pow exponent must be finite");
  return make_node(Op::Pow, exponent, 0, base.node_, nullptr);
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
int Expr::index() const { return node_->index; }

Expr Expr::lhs() const {
  if (!node_->a) throw DomainError("leaf expression has no operand");
  return Expr(node_->a);
}

Expr Expr::rhs() const {
  if (!node_->b) throw DomainError("expression has no second operand");
  return Expr(node_->b);
}

std::size_t Expr::hash() const { return node_->hash; }

bool operator==(const Expr& a, const Expr& b) {
  std::unordered_set<std::pair<const Node*, const Node*>, PairHash> proven;
  return structurally_equal(a.node(), b.node(), proven);
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::binary(Op::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::binary(Op::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::binary(Op::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::binary(Op::Div, a, b); }
Expr operator-(const Expr& a) { return Expr::unary(Op::Neg, a); }
Expr operator+(const Expr& a, double b) { return a + Expr::constant(b); }
Expr operator+(double a, const Expr& b) { return Expr::constant(a) + b; }
Expr operator-(const Expr& a, double b) { return a - Expr::constant(b); }
Expr operator-(double a, const Expr& b) { return Expr::constant(a) - b; }
Expr operator*(double a, const Expr& b) { return Expr::constant(a) * b; }
Expr operator*(const Expr& a, double b) { return a * Expr::constant(b); }
Expr operator/(const Expr& a, double b) { return a / Expr::constant(b); }
Expr operator/(double a, const Expr& b) { return Expr::constant(a) / b; }

Expr pow(const Expr& base, double exponent) { return Expr::pow(base, exponent); }
Expr sin(const Expr& e) { return Expr::unary(Op::Sin, e); }
Expr cos(const Expr& e) { return Expr::unary(Op::Cos, e); }
Expr tan(const Expr& e) { return Expr::unary(Op::Tan, e); }
Expr atan(const Expr& e) { return Expr::unary(Op::Arctan, e); }
Expr exp(const Expr& e) { return Expr::unary(Op::Exp, e); }
Expr log(const Expr& e) { return Expr::unary(Op::Ln, e); }
Expr abs(const Expr& e) { return Expr::unary(Op::Abs, e); }
Expr sign(const Expr& e) { return Expr::unary(Op::Sign, e); }

// ---------------------------------------------------------------------------
// Evaluation

double eval(const Expr& e, const EvalPoint& p) {
  std::unordered_map<const Node*, double> memo;
  std::function<double(const Node*)> go = [&](const Node* n) -> double {
    if (auto it = memo.find(n); it != memo.end()) return it->second;
    double r = 0.0;
    switch (n->op) {
      case Op::Const:
        r = n->value;
        break;
      case Op::Var:
        if (static_cast<std::size_t>(n->index) > p.x.size()) {
          throw EvalError(Op::Var, "state index x" + std::to_string(n->index) + " outside the evaluation point");
        }
        r = p.x[static_cast<std::size_t>(n->index - 1)];
        break;
      case Op::Time:
        r = p.t;
        break;
      default: {
        const double a = go(n->a.get());
        const double b = n->b ? go(n->b.get()) : 0.0;
        r = apply(n->op, a, b, n->value);
      }
    }
    memo.emplace(n, r);
    return r;
  };
  return go(e.node());
}

int max_state_index(const Expr& e) {
  int m = 0;
  visit_dag(e, [&](const Node& n) {
    if (n.op == Op::Var) m = std::max(m, n.index);
  });
  return m;
}

std::size_t dag_size(const Expr& e) {
  std::size_t count = 0;
  visit_dag(e, [&](const Node&) { ++count; });
  return count;
}

// ---------------------------------------------------------------------------
// Differentiation and simplification

Expr partial(const Expr& e, Wrt wrt) {
  std::unordered_map<const Node*, Expr> memo;
  std::function<Expr(const Expr&)> d = [&](const Expr& x) -> Expr {
    if (auto it = memo.find(x.node()); it != memo.end()) return it->second;
    Expr r;
    switch (x.op()) {
      case Op::Const:
        break;
      case Op::Var:
        if (!wrt.is_time() && x.index() == wrt.index) r = Expr::constant(1.0);
        break;
      case Op::Time:
        if (wrt.is_time()) r = Expr::constant(1.0);
        break;
      case Op::Add:
        r = s_add(d(x.lhs()), d(x.rhs()));
        break;
      case Op::Sub:
        r = s_sub(d(x.lhs()), d(x.rhs()));
        break;
      case Op::Mul: {
        const Expr a = x.lhs(), b = x.rhs();
        r = s_add(s_mul(d(a), b), s_mul(a, d(b)));
        break;
      }
      case Op::Div: {
        // a'/b - a b'/b^2
        const Expr a = x.lhs(), b = x.rhs();
        const Expr db = d(b);
        r = s_div(d(a), b);
        if (!db.is_const(0.0)) r = s_sub(r, s_div(s_mul(a, db), s_pow(b, 2.0)));
        break;
      }
      case Op::Pow: {
        const Expr a = x.lhs();
        const double p = x.value();
        r = s_mul(s_mul(Expr::constant(p), s_pow(a, p - 1.0)), d(a));
        break;
      }
      case Op::Neg:
        r = s_neg(d(x.lhs()));
        break;
      case Op::Sin:
        r = s_mul(s_unary(Op::Cos, x.lhs()), d(x.lhs()));
        break;
      case Op::Cos:
        r = s_neg(s_mul(s_unary(Op::Sin, x.lhs()), d(x.lhs())));
        break;
      case Op::Tan:
        r = s_mul(s_add(Expr::constant(1.0), s_pow(x, 2.0)), d(x.lhs()));
        break;
      case Op::Arctan:
        r = s_div(d(x.lhs()), s_add(s_pow(x.lhs(), 2.0), Expr::constant(1.0)));
        break;
      case Op::Exp:
        r = s_mul(x, d(x.lhs()));
        break;
      case Op::Ln:
        r = s_div(d(x.lhs()), x.lhs());
        break;
      case Op::Abs:
        r = s_mul(s_unary(Op::Sign, x.lhs()), d(x.lhs()));
        break;
      case Op::Sign:
        break;
    }
    memo.emplace(x.node(), r);
    return r;
  };
  return d(e);
}

Expr lie_derivative(const Expr& e, int n) {
  if (n < 1) throw DomainError("lie_derivative: chain order must be >= 1");
  std::vector<int> vars;
  visit_dag(e, [&](const Node& node) {
    if (node.op == Op::Var) vars.push_back(node.index);
  });
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  if (!vars.empty() && vars.back() >= n) {
    throw StructureError("lie_derivative: expression depends on x" + std::to_string(vars.back()) +
                         ", whose derivative along a chain of order " + std::to_string(n) + " is the input");
  }
  Expr out = partial(e, Wrt::time());
  for (int j : vars) out = s_add(out, s_mul(partial(e, Wrt::state(j)), Expr::var(j + 1)));
  return simplify(out);
}

Expr simplify(const Expr& e) {
  std::unordered_map<const Node*, Expr> memo;
  std::function<Expr(const Expr&)> go = [&](const Expr& x) -> Expr {
    if (auto it = memo.find(x.node()); it != memo.end()) return it->second;
    Expr r = x;
    if (x.op() == Op::Pow || is_unary(x.op())) {
      r = rebuild(x.op(), go(x.lhs()), Expr(), x.value());
    } else if (is_binary(x.op())) {
      r = rebuild(x.op(), go(x.lhs()), go(x.rhs()), 0.0);
    }
    memo.emplace(x.node(), r);
    return r;
  };
  return go(e);
}

// ---------------------------------------------------------------------------
// Printing

namespace {

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool is_atomic(const Expr& e) {
  switch (e.op()) {
    case Op::Const:
      return e.value() >= 0.0;
    case Op::Var:
    case Op::Time:
      return true;
    case Op::Neg:
    case Op::Pow:
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
      return false;
    default:
      return true;  // function call syntax
  }
}

}  // namespace

std::string to_string(const Expr& e, std::span<const Alias> aliases) {
  std::function<std::string(const Expr&, bool)> go = [&](const Expr& x, bool wrap) -> std::string {
    for (const auto& al : aliases) {
      if (al.pattern.hash() == x.hash() && al.pattern == x) return al.name;
    }
    auto operand = [&](const Expr& c) { return go(c, !is_atomic(c)); };
    std::string s;
    switch (x.op()) {
      case Op::Const:
        s = format_number(x.value());
        break;
      case Op::Var:
        s = "x" + std::to_string(x.index());
        break;
      case Op::Time:
        s = "t";
        break;
      case Op::Add:
        s = operand(x.lhs()) + " + " + operand(x.rhs());
        break;
      case Op::Sub:
        s = operand(x.lhs()) + " - " + operand(x.rhs());
        break;
      case Op::Mul:
        s = operand(x.lhs()) + " * " + operand(x.rhs());
        break;
      case Op::Div:
        s = operand(x.lhs()) + " / " + operand(x.rhs());
        break;
      case Op::Pow: {
        const double p = x.value();
        s = operand(x.lhs()) + "^" + (p < 0.0 ? "(" + format_number(p) + ")" : format_number(p));
        break;
      }
      case Op::Neg:
        s = "-" + operand(x.lhs());
        break;
      case Op::Sin:
        s = "sin(" + go(x.lhs(), false) + ")";
        break;
      case Op::Cos:
        s = "cos(" + go(x.lhs(), false) + ")";
        break;
      case Op::Tan:
        s = "tan(" + go(x.lhs(), false) + ")";
        break;
      case Op::Arctan:
        s = "atan(" + go(x.lhs(), false) + ")";
        break;
      case Op::Exp:
        s = "exp(" + go(x.lhs(), false) + ")";
        break;
      case Op::Ln:
        s = "ln(" + go(x.lhs(), false) + ")";
        break;
      case Op::Abs:
        s = "abs(" + go(x.lhs(), false) + ")";
        break;
      case Op::Sign:
        s = "sign(" + go(x.lhs(), false) + ")";
        break;
    }
    return wrap ? "(" + s + ")" : s;
  };
  return go(e, false);
}

// ---------------------------------------------------------------------------
// Program

namespace {

struct InstrKey {
  Op op;
  std::uint64_t value;
  std::uint32_t a;
  std::uint32_t b;
  bool operator==(const InstrKey&) const = default;
};

struct InstrKeyHash {
  std::size_t operator()(const InstrKey& k) const {
    std::size_t h = mix(static_cast<std::size_t>(k.op), static_cast<std::size_t>(k.value));
    return mix(mix(h, k.a), k.b);
  }
};

}  // namespace

Program::Program(std::span<const Expr> roots) {
  std::unordered_map<const Node*, std::uint32_t> by_ptr;
  std::unordered_map<InstrKey, std::uint32_t, InstrKeyHash> by_key;
  constexpr std::uint32_t kNone = 0xffffffffu;

  std::function<std::uint32_t(const Node*)> emit = [&](const Node* n) -> std::uint32_t {
    if (auto it = by_ptr.find(n); it != by_ptr.end()) return it->second;
    Instr ins{n->op, kNone, kNone, n->value};
    if (n->op == Op::Var) {
      ins.a = static_cast<std::uint32_t>(n->index - 1);
      max_state_ = std::max(max_state_, n->index);
    }
    if (n->a) ins.a = emit(n->a.get());
    if (n->b) ins.b = emit(n->b.get());
    const InstrKey key{ins.op, static_cast<std::uint64_t>(value_bits(ins.value)), ins.a, ins.b};
    std::uint32_t slot;
    if (auto it = by_key.find(key); it != by_key.end()) {
      slot = it->second;
    } else {
      slot = static_cast<std::uint32_t>(tape_.size());
      tape_.push_back(ins);
      by_key.emplace(key, slot);
    }
    by_ptr.emplace(n, slot);
    return slot;
  };
  for (const auto& r : roots) roots_.push_back(emit(r.node()));
}

void Program::eval(std::span<const double> x, double t, std::span<double> out) const {
  if (out.size() != roots_.size()) throw DomainError("Program::eval: output span has the wrong size");
  if (static_cast<std::size_t>(max_state_) > x.size()) {
    throw EvalError(Op::Var, "state vector shorter than the highest referenced index x" + std::to_string(max_state_));
  }
  thread_local std::vector<double> slots;
  slots.resize(tape_.size());
  for (std::size_t i = 0; i < tape_.size(); ++i) {
    const Instr& ins = tape_[i];
    switch (ins.op) {
      case Op::Const:
        slots[i] = ins.value;
        break;
      case Op::Var:
        slots[i] = x[ins.a];
        break;
      case Op::Time:
        slots[i] = t;
        break;
      case Op::Add:
        slots[i] = slots[ins.a] + slots[ins.b];
        break;
      case Op::Sub:
        slots[i] = slots[ins.a] - slots[ins.b];
        break;
      case Op::Mul:
        slots[i] = slots[ins.a] * slots[ins.b];
        break;
      default:
        slots[i] = apply(ins.op, slots[ins.a], ins.b == 0xffffffffu ? 0.0 : slots[ins.b], ins.value);
    }
  }
  for (std::size_t k = 0; k < roots_.size(); ++k) {
    const double v = slots[roots_[k]];
    if (!std::isfinite(v)) throw EvalError(tape_[roots_[k]].op, "non-finite expression value");
    out[k] = v;
  }
}

// ---------------------------------------------------------------------------
// Sum-of-products expansion

namespace {

bool matches_atom(const Expr& e, std::span<const Expr> atoms) {
  for (const auto& a : atoms) {
    if (a.hash() == e.hash() && a == e) return true;
  }
  return false;
}

Term product(const Term& a, const Term& b) {
  Term t{a.coef * b.coef, a.num, a.den};
  t.num.insert(t.num.end(), b.num.begin(), b.num.end());
  t.den.insert(t.den.end(), b.den.begin(), b.den.end());
  return t;
}

std::vector<Term> expand_rec(const Expr& e, std::span<const Expr> atoms) {
  if (matches_atom(e, atoms)) return {Term{1.0, {e}, {}}};
  switch (e.op()) {
    case Op::Const:
      return {Term{e.value(), {}, {}}};
    case Op::Add:
    case Op::Sub: {
      auto out = expand_rec(e.lhs(), atoms);
      auto rhs = expand_rec(e.rhs(), atoms);
      if (e.op() == Op::Sub) {
        for (auto& t : rhs) t.coef = -t.coef;
      }
      out.insert(out.end(), rhs.begin(), rhs.end());
      return out;
    }
    case Op::Neg: {
      auto out = expand_rec(e.lhs(), atoms);
      for (auto& t : out) t.coef = -t.coef;
      return out;
    }
    case Op::Mul: {
      const auto a = expand_rec(e.lhs(), atoms);
      const auto b = expand_rec(e.rhs(), atoms);
      std::vector<Term> out;
      for (const auto& x : a) {
        for (const auto& y : b) out.push_back(product(x, y));
      }
      return out;
    }
    case Op::Div: {
      auto out = expand_rec(e.lhs(), atoms);
      const auto b = expand_rec(e.rhs(), atoms);
      Term inv;
      if (b.size() == 1 && b[0].coef != 0.0) {
        inv = Term{1.0 / b[0].coef, b[0].den, b[0].num};
      } else {
        inv = Term{1.0, {}, {e.rhs()}};
      }
      for (auto& t : out) t = product(t, inv);
      return out;
    }
    case Op::Pow: {
      const double p = e.value();
      if (p >= 1.0 && p <= 16.0 && p == std::floor(p)) {
        const auto base = expand_rec(e.lhs(), atoms);
        if (base.size() == 1) {
          Term t{1.0, {}, {}};
          for (int k = 0; k < static_cast<int>(p); ++k) t = product(t, base[0]);
          return {t};
        }
      }
      return {Term{1.0, {e}, {}}};
    }
    default:
      return {Term{1.0, {e}, {}}};
  }
}

}  // namespace

std::vector<Term> expand(const Expr& e, std::span<const Expr> atoms) {
  auto terms = expand_rec(e, atoms);
  std::erase_if(terms, [](const Term& t) { return t.coef == 0.0; });
  return terms;
}

Expr to_expr(std::span<const Term> terms) {
  Expr sum = Expr::constant(0.0);
  for (const auto& t : terms) {
    Expr num = Expr::constant(t.coef);
    for (const auto& f : t.num) num = num * f;
    Expr den = Expr::constant(1.0);
    for (const auto& f : t.den) den = den * f;
    sum = sum + num / den;
  }
  return sum;
}

std::string to_string(std::span<const Term> terms, std::span<const Alias> aliases) {
  auto factor = [&](const Expr& f) {
    for (const auto& al : aliases) {
      if (al.pattern.hash() == f.hash() && al.pattern == f) return al.name;
    }
    const std::string s = to_string(f, aliases);
    return is_atomic(f) ? s : "(" + s + ")";
  };
  // adjacent equal factors become powers
  auto run = [&](const std::vector<Expr>& fs) {
    std::vector<std::pair<Expr, int>> groups;
    for (const auto& f : fs) {
      bool merged = false;
      for (auto& g : groups) {
        if (g.first == f) {
          ++g.second;
          merged = true;
          break;
        }
      }
      if (!merged) groups.emplace_back(f, 1);
    }
    std::string out;
    for (const auto& [f, k] : groups) {
      if (!out.empty()) out += " * ";
      out += factor(f);
      if (k > 1) out += "^" + std::to_string(k);
    }
    return std::make_pair(out, groups.size());
  };

  if (terms.empty()) return "0";
  std::string out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Term& t = terms[i];
    const bool neg = t.coef < 0.0;
    const double mag = std::abs(t.coef);
    if (i == 0) {
      out += neg ? "-" : "";
    } else {
      out += neg ? " - " : " + ";
    }
    const auto [num, nnum] = run(t.num);
    std::string body;
    if (mag != 1.0 || num.empty()) body = format_number(mag);
    if (!num.empty()) body += (body.empty() ? "" : " * ") + num;
    out += body;
    if (!t.den.empty()) {
      const auto [den, nden] = run(t.den);
      const bool single = nden == 1 && den.find(" * ") == std::string::npos;
      out += " / " + (single ? den : "(" + den + ")");
    }
  }
  return out;
}

}  // namespace psis::sym
