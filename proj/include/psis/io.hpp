#pragma once

#include <filesystem>
#include <string>

#include "psis/simulation.hpp"

namespace psis {

/// Output file that already exists under --no-clobber, or cannot be written.
class OutputError : public Error {
 public:
  using Error::Error;
};

/// %.17g
std::string format_real(double v);

/// Header t,x1..xn,z1..zn,u,V,dV; z/V/dV cells are empty for t >= T_p.
std::string trajectory_csv(const Trajectory& traj);

struct SvgOptions {
  bool timestamp = true;
  std::string title;
};

/// Two stacked 800x600 panels: states on top, control (and pendulum torque) below.
std::string trajectory_svg(const Trajectory& traj, const PlantModel& plant, const SvgOptions& opt = {});

/// Writes the whole file; refuses to replace an existing file when no_clobber is set.
void write_text(const std::filesystem::path& path, const std::string& content, bool no_clobber);

}  // namespace psis
