#pragma once

#include <filesystem>
#include <iosfwd>

#include "vobs/domain.hpp"

namespace vobs {

// Column order of the trajectory CSV. The header row is mandatory.
inline constexpr const char* kTrajectoryCsvHeader =
    "t,ax,ay,yaw_rate,wheel_speed_rr,steering,gt_x,gt_y,gt_yaw,gt_vx,gt_vy,gt_yaw_rate,gt_ax,"
    "gt_ay,gt_beta";

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);

// The CSV carries no label; callers attach one from the corpus manifest.
// The single t column is used for both the sensor frame and the truth state.
Trajectory read_trajectory_csv(std::istream& is, std::string label = {});
Trajectory read_trajectory_csv(const std::filesystem::path& path, std::string label = {});

}  // namespace vobs
