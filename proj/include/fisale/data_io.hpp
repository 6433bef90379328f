#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fisale/geometry.hpp"
#include "fisale/model.hpp"

namespace fisale {

struct ChannelInfo {
  std::string name;
  std::string unit;
};

/// Per-trajectory metadata kept next to the binary file as `<id>.meta.json`.
struct TrajectoryMeta {
  std::vector<std::pair<std::string, double>> conditions;
  bool ood = false;
  double frame_dt = 1.0;
  /// Channel names per domain (fluid, solid, interface).
  std::array<std::vector<ChannelInfo>, 3> channels;
  /// Points whose positions never move; empty vectors mean none.
  BoundaryMask mask;
};

struct Trajectory {
  std::string id;
  std::vector<SystemState> frames;
  TrajectoryMeta meta;

  /// Frame count >= 1, every frame valid with identical shapes.
  void validate() const;
};

inline constexpr std::uint32_t kTrajectoryVersion = 1;

/// "FSL1" + u32 {version, d, T, N_f, N_s, N_b, C_f, C_s, C_b} + f32 frames.
void write_trajectory(const Trajectory& traj, const std::filesystem::path& path);
/// Frames only; id, conditions and time stamps are not part of the binary format.
Trajectory read_trajectory(const std::filesystem::path& path);

void write_meta(const TrajectoryMeta& meta, const std::filesystem::path& path);
TrajectoryMeta read_meta(const std::filesystem::path& path);

/// Writes `<dir>/<id>.fsl` and `<dir>/<id>.meta.json`.
void save_trajectory(const Trajectory& traj, const std::filesystem::path& dir);
/// Reads both files back, filling id, meta, conditions and frame times.
Trajectory load_trajectory(const std::filesystem::path& dir, const std::string& id);

enum class Split { train, val, test, ood };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string id;
  std::string file;
  std::size_t frames = 0;
  std::size_t n_fluid = 0, n_solid = 0, n_interface = 0;
  std::vector<std::pair<std::string, double>> conditions;
  bool ood = false;
  Split split = Split::train;
};

struct Manifest {
  std::uint32_t version = 1;
  std::size_t dim = 0;
  std::size_t fluid_channels = 0, solid_channels = 0;
  std::array<std::vector<ChannelInfo>, 3> channels;
  std::array<std::size_t, 3> ratios{8, 1, 1};
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
  NormStats stats;
  bool has_stats = false;

  std::vector<std::string> ids(Split s) const;
  const ManifestEntry& entry(const std::string& id) const;
  DataLayout layout() const;
};

/// Shuffles the non-OOD trajectories of `dir` by `seed` and assigns
/// floor-proportional train/val counts, the remainder going to test. Flagged
/// trajectories always land in the OOD split. Stats are computed from train.
Manifest build_manifest(const std::filesystem::path& dir, std::array<std::size_t, 3> ratios,
                        std::uint64_t seed);

/// Per-channel mean / std over every frame of the listed trajectories.
NormStats compute_norm_stats(const std::vector<Trajectory>& train);
NormStats compute_norm_stats(const Manifest& manifest, const std::filesystem::path& dir);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

inline constexpr const char* kManifestName = "manifest.json";

/// read_manifest(dir / manifest.json).
Manifest load_manifest(const std::filesystem::path& dir);

void write_norm_stats_json(const NormStats& stats, std::ostream& out);

}  // namespace fisale
