#include "fisale/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "binary_io.hpp"

namespace fisale {

namespace {

constexpr std::array<char, 4> kMagic{'F', 'S', 'L', '1'};
using json = nlohmann::ordered_json;

void write_block(std::ostream& os, const Tensor& t) {
  for (double v : t.data()) detail::write_f32(os, static_cast<float>(v));
}

Tensor read_block(std::istream& is, std::size_t rows, std::size_t cols, const char* what) {
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = static_cast<double>(detail::read_f32(is, what));
  return t;
}

std::uint32_t as_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw FormatError(std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

json conditions_json(const std::vector<std::pair<std::string, double>>& c) {
  json out = json::array();
  for (const auto& [k, v] : c) out.push_back({{"name", k}, {"value", v}});
  return out;
}

std::vector<std::pair<std::string, double>> conditions_from(const json& j) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& item : j) {
    out.emplace_back(item.at("name").get<std::string>(), item.at("value").get<double>());
  }
  return out;
}

json channels_json(const std::array<std::vector<ChannelInfo>, 3>& channels) {
  json out = json::object();
  for (auto d : kDomains) {
    json list = json::array();
    for (const auto& c : channels[static_cast<std::size_t>(d)]) {
      list.push_back({{"name", c.name}, {"unit", c.unit}});
    }
    out[domain_name(d)] = list;
  }
  return out;
}

std::array<std::vector<ChannelInfo>, 3> channels_from(const json& j) {
  std::array<std::vector<ChannelInfo>, 3> out;
  for (auto d : kDomains) {
    if (!j.contains(domain_name(d))) continue;
    for (const auto& c : j.at(domain_name(d))) {
      out[static_cast<std::size_t>(d)].push_back(
          ChannelInfo{c.at("name").get<std::string>(), c.value("unit", std::string{})});
    }
  }
  return out;
}

json stats_json(const NormStats& s) {
  json out = json::object();
  for (auto d : kDomains) {
    const auto& ds = s.domain(d);
    out[domain_name(d)] = {{"position_mean", ds.position_mean},
                           {"position_std", ds.position_std},
                           {"quantity_mean", ds.quantity_mean},
                           {"quantity_std", ds.quantity_std}};
  }
  out["condition_mean"] = s.condition_mean;
  out["condition_std"] = s.condition_std;
  return out;
}

NormStats stats_from(const json& j) {
  NormStats s;
  for (auto d : kDomains) {
    const auto& item = j.at(domain_name(d));
    auto& ds = s.domain(d);
    ds.position_mean = item.at("position_mean").get<std::vector<double>>();
    ds.position_std = item.at("position_std").get<std::vector<double>>();
    ds.quantity_mean = item.at("quantity_mean").get<std::vector<double>>();
    ds.quantity_std = item.at("quantity_std").get<std::vector<double>>();
  }
  s.condition_mean = j.at("condition_mean").get<std::vector<double>>();
  s.condition_std = j.at("condition_std").get<std::vector<double>>();
  return s;
}

// Two-pass per-column mean / std accumulated over a list of matrices.
struct ColumnMoments {
  std::vector<double> sum, sq;
  std::size_t count = 0;

  void add_mean(const Tensor& t) {
    if (sum.empty()) sum.assign(t.cols(), 0.0);
    if (t.cols() != sum.size()) throw DimensionError("stats: channel count varies");
    for (std::size_t i = 0; i < t.rows(); ++i) {
      for (std::size_t j = 0; j < t.cols(); ++j) sum[j] += t(i, j);
    }
    count += t.rows();
  }
  std::vector<double> mean() const {
    std::vector<double> m(sum.size());
    for (std::size_t j = 0; j < m.size(); ++j) m[j] = sum[j] / static_cast<double>(count);
    return m;
  }
  void add_var(const Tensor& t, const std::vector<double>& m) {
    if (sq.empty()) sq.assign(m.size(), 0.0);
    for (std::size_t i = 0; i < t.rows(); ++i) {
      for (std::size_t j = 0; j < t.cols(); ++j) {
        const double e = t(i, j) - m[j];
        sq[j] += e * e;
      }
    }
  }
  std::vector<double> std_dev() const {
    std::vector<double> s(sq.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
      s[j] = std::max(std::sqrt(sq[j] / static_cast<double>(count)), kStdFloor);
    }
    return s;
  }
};

}  // namespace

void Trajectory::validate() const {
  if (frames.empty()) throw DimensionError("trajectory " + id + " has no frames");
  const auto& first = frames.front();
  first.validate();
  for (const auto& f : frames) {
    f.validate();
    for (auto d : kDomains) {
      if (f.domain(d).positions.shape() != first.domain(d).positions.shape() ||
          f.domain(d).quantities.shape() != first.domain(d).quantities.shape()) {
        throw DimensionError("trajectory " + id + ": frame shapes vary");
      }
    }
  }
}

void write_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  traj.validate();
  const auto& f0 = traj.frames.front();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kMagic.data(), kMagic.size());
  detail::write_u32(os, kTrajectoryVersion);
  detail::write_u32(os, as_u32(f0.fluid.dim(), "d"));
  detail::write_u32(os, as_u32(traj.frames.size(), "T"));
  detail::write_u32(os, as_u32(f0.fluid.count(), "N_f"));
  detail::write_u32(os, as_u32(f0.solid.count(), "N_s"));
  detail::write_u32(os, as_u32(f0.interface.count(), "N_b"));
  detail::write_u32(os, as_u32(f0.fluid.channels(), "C_f"));
  detail::write_u32(os, as_u32(f0.solid.channels(), "C_s"));
  detail::write_u32(os, as_u32(f0.interface.channels(), "C_b"));
  for (const auto& f : traj.frames) {
    for (auto d : kDomains) {
      write_block(os, f.domain(d).positions);
      write_block(os, f.domain(d).quantities);
    }
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open trajectory: " + path.string());
  detail::expect_magic(is, kMagic);
  const auto version = detail::read_u32(is, "version");
  if (version != kTrajectoryVersion) {
    throw FormatError("unsupported trajectory version " + std::to_string(version));
  }
  const std::size_t d = detail::read_u32(is, "d");
  const std::size_t t = detail::read_u32(is, "T");
  const std::array<std::size_t, 3> n{detail::read_u32(is, "N_f"), detail::read_u32(is, "N_s"),
                                     detail::read_u32(is, "N_b")};
  const std::array<std::size_t, 3> c{detail::read_u32(is, "C_f"), detail::read_u32(is, "C_s"),
                                     detail::read_u32(is, "C_b")};
  if (c[2] != c[0] + c[1]) {
    throw FormatError("channel accounting violated: C_b=" + std::to_string(c[2]) +
                      " but C_f + C_s=" + std::to_string(c[0] + c[1]));
  }
  if (d < 1 || d > 3) throw FormatError("spatial dimension must be 1..3");
  if (t < 1) throw FormatError("trajectory has no frames");
  for (auto count : n) {
    if (count < 1) throw FormatError("empty domain in trajectory header");
  }
  Trajectory traj;
  traj.id = path.stem().string();
  traj.frames.reserve(t);
  for (std::size_t k = 0; k < t; ++k) {
    SystemState s;
    for (auto dom : kDomains) {
      const auto i = static_cast<std::size_t>(dom);
      s.domain(dom).positions = read_block(is, n[i], d, "positions");
      s.domain(dom).quantities = read_block(is, n[i], c[i], "quantities");
    }
    traj.frames.push_back(std::move(s));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after last frame in " + path.string());
  }
  return traj;
}

void write_meta(const TrajectoryMeta& meta, const std::filesystem::path& path) {
  json j;
  j["conditions"] = conditions_json(meta.conditions);
  j["ood"] = meta.ood;
  j["frame_dt"] = meta.frame_dt;
  j["channels"] = channels_json(meta.channels);
  json mask = json::object();
  for (auto d : kDomains) {
    const auto& flags = meta.mask.domain(d);
    if (flags.empty()) continue;
    std::vector<int> v(flags.begin(), flags.end());
    mask[domain_name(d)] = v;
  }
  j["fixed_points"] = mask;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

TrajectoryMeta read_meta(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const json j = json::parse(is);
  TrajectoryMeta meta;
  meta.conditions = conditions_from(j.value("conditions", json::array()));
  meta.ood = j.value("ood", false);
  meta.frame_dt = j.value("frame_dt", 1.0);
  meta.channels = channels_from(j.value("channels", json::object()));
  if (j.contains("fixed_points")) {
    for (auto d : kDomains) {
      if (!j["fixed_points"].contains(domain_name(d))) continue;
      for (int v : j["fixed_points"][domain_name(d)]) meta.mask.domain(d).push_back(v != 0);
    }
  }
  return meta;
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_trajectory(traj, dir / (traj.id + ".fsl"));
  write_meta(traj.meta, dir / (traj.id + ".meta.json"));
}

Trajectory load_trajectory(const std::filesystem::path& dir, const std::string& id) {
  Trajectory traj = read_trajectory(dir / (id + ".fsl"));
  traj.id = id;
  const auto meta_path = dir / (id + ".meta.json");
  if (std::filesystem::exists(meta_path)) traj.meta = read_meta(meta_path);
  for (std::size_t k = 0; k < traj.frames.size(); ++k) {
    traj.frames[k].conditions = traj.meta.conditions;
    traj.frames[k].time = static_cast<double>(k) * traj.meta.frame_dt;
  }
  for (auto d : kDomains) {
    const auto& flags = traj.meta.mask.domain(d);
    if (!flags.empty() && flags.size() != traj.frames[0].domain(d).count()) {
      throw FormatError("fixed-point mask of " + id + " does not match point count");
    }
  }
  return traj;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
    case Split::ood:
      return "ood";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  for (auto v : {Split::train, Split::val, Split::test, Split::ood}) {
    if (s == split_name(v)) return v;
  }
  throw std::invalid_argument("unknown split: '" + s + "'");
}

std::vector<std::string> Manifest::ids(Split s) const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(e.id);
  }
  return out;
}

const ManifestEntry& Manifest::entry(const std::string& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return e;
  }
  throw std::invalid_argument("no trajectory '" + id + "' in manifest");
}

DataLayout Manifest::layout() const {
  std::size_t conditions = entries.empty() ? 0 : entries.front().conditions.size();
  return DataLayout{dim, fluid_channels, solid_channels, conditions};
}

NormStats compute_norm_stats(const std::vector<Trajectory>& train) {
  if (train.empty()) throw std::invalid_argument("cannot compute stats of an empty split");
  NormStats stats;
  for (auto d : kDomains) {
    ColumnMoments pos, qty;
    for (const auto& t : train) {
      for (const auto& f : t.frames) {
        pos.add_mean(f.domain(d).positions);
        qty.add_mean(f.domain(d).quantities);
      }
    }
    const auto pm = pos.mean(), qm = qty.mean();
    for (const auto& t : train) {
      for (const auto& f : t.frames) {
        pos.add_var(f.domain(d).positions, pm);
        qty.add_var(f.domain(d).quantities, qm);
      }
    }
    auto& ds = stats.domain(d);
    ds.position_mean = pm;
    ds.position_std = pos.std_dev();
    ds.quantity_mean = qm;
    ds.quantity_std = qty.std_dev();
  }
  const std::size_t nc = train.front().frames.front().conditions.size();
  if (nc > 0) {
    ColumnMoments cond;
    std::vector<Tensor> all;
    for (const auto& t : train) {
      for (const auto& f : t.frames) {
        const auto v = f.condition_values();
        if (v.size() != nc) throw DimensionError("stats: condition count varies");
        all.emplace_back(Shape{1, nc}, v);
      }
    }
    for (const auto& r : all) cond.add_mean(r);
    const auto cm = cond.mean();
    for (const auto& r : all) cond.add_var(r, cm);
    stats.condition_mean = cm;
    stats.condition_std = cond.std_dev();
  }
  return stats;
}

NormStats compute_norm_stats(const Manifest& manifest, const std::filesystem::path& dir) {
  std::vector<Trajectory> train;
  for (const auto& id : manifest.ids(Split::train)) train.push_back(load_trajectory(dir, id));
  return compute_norm_stats(train);
}

Manifest build_manifest(const std::filesystem::path& dir, std::array<std::size_t, 3> ratios,
                        std::uint64_t seed) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::invalid_argument("not a directory: " + dir.string());
  }
  if (ratios[0] + ratios[1] + ratios[2] == 0) throw std::invalid_argument("ratios sum to zero");
  std::vector<std::string> ids;
  for (const auto& item : std::filesystem::directory_iterator(dir)) {
    if (item.is_regular_file() && item.path().extension() == ".fsl") {
      ids.push_back(item.path().stem().string());
    }
  }
  if (ids.empty()) throw std::invalid_argument("no trajectory files in " + dir.string());
  std::sort(ids.begin(), ids.end());

  Manifest m;
  m.ratios = ratios;
  m.seed = seed;
  std::vector<std::size_t> regular;
  for (const auto& id : ids) {
    Trajectory t = load_trajectory(dir, id);
    const auto& f0 = t.frames.front();
    ManifestEntry e;
    e.id = id;
    e.file = id + ".fsl";
    e.frames = t.frames.size();
    e.n_fluid = f0.fluid.count();
    e.n_solid = f0.solid.count();
    e.n_interface = f0.interface.count();
    e.conditions = t.meta.conditions;
    e.ood = t.meta.ood;
    e.split = e.ood ? Split::ood : Split::train;
    if (m.entries.empty()) {
      m.dim = f0.fluid.dim();
      m.fluid_channels = f0.fluid.channels();
      m.solid_channels = f0.solid.channels();
      m.channels = t.meta.channels;
    } else if (m.dim != f0.fluid.dim() || m.fluid_channels != f0.fluid.channels() ||
               m.solid_channels != f0.solid.channels()) {
      throw FormatError("trajectory " + id + " has a different layout from the others");
    }
    if (!e.ood) regular.push_back(m.entries.size());
    m.entries.push_back(std::move(e));
  }

  Rng rng(seed);
  std::shuffle(regular.begin(), regular.end(), rng);
  const std::size_t total = ratios[0] + ratios[1] + ratios[2];
  const std::size_t n = regular.size();
  const std::size_t n_train = n * ratios[0] / total;
  const std::size_t n_val = n * ratios[1] / total;
  for (std::size_t i = 0; i < n; ++i) {
    m.entries[regular[i]].split = i < n_train           ? Split::train
                                  : i < n_train + n_val ? Split::val
                                                        : Split::test;
  }
  if (!m.ids(Split::train).empty()) {
    m.stats = compute_norm_stats(m, dir);
    m.has_stats = true;
  }
  return m;
}

void write_norm_stats_json(const NormStats& stats, std::ostream& out) {
  out << stats_json(stats).dump(2);
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  json j;
  j["version"] = m.version;
  j["d"] = m.dim;
  j["channel_counts"] = {{"fluid", m.fluid_channels},
                         {"solid", m.solid_channels},
                         {"interface", m.fluid_channels + m.solid_channels}};
  j["channels"] = channels_json(m.channels);
  j["ratios"] = m.ratios;
  j["seed"] = m.seed;
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back(
        {{"id", e.id},
         {"file", e.file},
         {"frames", e.frames},
         {"shapes", {{"fluid", e.n_fluid}, {"solid", e.n_solid}, {"interface", e.n_interface}}},
         {"conditions", conditions_json(e.conditions)},
         {"ood", e.ood},
         {"split", split_name(e.split)}});
  }
  j["trajectories"] = entries;
  if (m.has_stats) j["norm_stats"] = stats_json(m.stats);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path.string());
  const json j = json::parse(is);
  Manifest m;
  m.version = j.at("version").get<std::uint32_t>();
  m.dim = j.at("d").get<std::size_t>();
  m.fluid_channels = j.at("channel_counts").at("fluid").get<std::size_t>();
  m.solid_channels = j.at("channel_counts").at("solid").get<std::size_t>();
  m.channels = channels_from(j.value("channels", json::object()));
  m.ratios = j.at("ratios").get<std::array<std::size_t, 3>>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& item : j.at("trajectories")) {
    ManifestEntry e;
    e.id = item.at("id").get<std::string>();
    e.file = item.at("file").get<std::string>();
    e.frames = item.at("frames").get<std::size_t>();
    e.n_fluid = item.at("shapes").at("fluid").get<std::size_t>();
    e.n_solid = item.at("shapes").at("solid").get<std::size_t>();
    e.n_interface = item.at("shapes").at("interface").get<std::size_t>();
    e.conditions = conditions_from(item.at("conditions"));
    e.ood = item.at("ood").get<bool>();
    e.split = parse_split(item.at("split").get<std::string>());
    m.entries.push_back(std::move(e));
  }
  if (j.contains("norm_stats")) {
    m.stats = stats_from(j.at("norm_stats"));
    m.has_stats = true;
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& dir) {
  return read_manifest(dir / kManifestName);
}

}  // namespace fisale
