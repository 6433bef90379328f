// Command-line front end: data generation, splitting, training, evaluation,
// rollouts, gradient checks and attention dumps.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fisale/harness.hpp"

namespace fs = std::filesystem;
using namespace fisale;

namespace {

std::array<std::size_t, 3> parse_ratios(const std::string& text) {
  std::array<std::size_t, 3> r{};
  std::stringstream ss(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ':')) {
    if (i == 3) break;
    r[i++] = std::stoul(part);
  }
  if (i != 3 || std::getline(ss, part)) {
    throw std::invalid_argument("ratios must look like 8:1:1, got " + text);
  }
  return r;
}

void print_json(const nlohmann::ordered_json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + out);
  os << j.dump(2) << "\n";
}

nlohmann::ordered_json split_summary(const Manifest& m) {
  nlohmann::ordered_json j;
  for (auto s : {Split::train, Split::val, Split::test, Split::ood}) {
    j[split_name(s)] = m.ids(s).size();
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fisale: latent ALE surrogate for fluid-solid interaction"};
  app.require_subcommand(1);

  // gen piston / gen potential
  auto* gen = app.add_subcommand("gen", "generate a dataset with the reference solvers");
  gen->require_subcommand(1);

  PistonDatasetOptions piston;
  std::string piston_out;
  auto* gp = gen->add_subcommand("piston", "gas column driven by a spring-mounted piston");
  gp->add_option("--out", piston_out, "output directory")->required();
  gp->add_option("--trajectories", piston.trajectories, "trajectory count")->required();
  gp->add_option("--seed", piston.seed, "sampling seed")->required();
  gp->add_option("--steps", piston.base.steps, "solver steps per trajectory")
      ->capture_default_str();
  gp->add_option("--dt", piston.base.dt, "solver time step (s)")->capture_default_str();
  gp->add_option("--ood-fraction", piston.ood_fraction,
                 "share of trajectories with stiffness outside the training range")
      ->capture_default_str();
  gp->add_option("--save-every", piston.base.save_every, "keep every n-th solver step")
      ->capture_default_str();
  gp->add_option("--nodes", piston.base.nodes, "fluid nodes including both ends")
      ->capture_default_str();
  gp->add_option("--dim", piston.base.dim, "1 or 2")->capture_default_str();

  PotentialDatasetOptions potential;
  std::string potential_out;
  auto* gq = gen->add_subcommand("potential", "steady potential flow past a cylinder");
  gq->add_option("--out", potential_out, "output directory")->required();
  gq->add_option("--samples", potential.samples, "sample count")->required();
  gq->add_option("--seed", potential.seed, "sampling seed")->required();
  gq->add_option("--dim", potential.base.dim, "2 or 3")->capture_default_str();

  // split
  std::string split_dir, ratios_text = "8:1:1";
  std::uint64_t split_seed = 0;
  auto* sp = app.add_subcommand("split", "assign splits and recompute train statistics");
  sp->add_option("--dir", split_dir, "dataset directory")->required();
  sp->add_option("--ratios", ratios_text, "train:val:test")->capture_default_str();
  sp->add_option("--seed", split_seed, "shuffle seed")->required();

  // train
  std::string data_dir, config_path, ckpt, log_path;
  auto* tr = app.add_subcommand("train", "train a model on the train split");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--config", config_path, "key = value config file")->required();
  tr->add_option("--out", ckpt, "checkpoint path")->required();
  tr->add_option("--log", log_path, "CSV log (default <out>.log.csv)");

  // eval
  std::string split_text, report_out;
  auto* ev = app.add_subcommand("eval", "metrics on one split");
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--ckpt", ckpt, "checkpoint path")->required();
  ev->add_option("--split", split_text, "val, test or ood")->required();
  ev->add_option("--out", report_out, "write the JSON report here instead of stdout");

  // rollout
  std::size_t rollout_steps = 0;
  std::string traj_id, save_dir;
  auto* ro = app.add_subcommand("rollout", "autoregressive rollout of one trajectory");
  ro->add_option("--data", data_dir, "dataset directory")->required();
  ro->add_option("--ckpt", ckpt, "checkpoint path")->required();
  ro->add_option("--steps", rollout_steps, "rollout length")->required();
  ro->add_option("--traj", traj_id, "trajectory id")->required();
  ro->add_option("--out", report_out, "write the JSON report here instead of stdout");
  ro->add_option("--save", save_dir, "also save the predicted trajectory to this directory");

  // gradcheck
  double tol = 1e-4;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check on a random instance");
  gc->add_option("--config", config_path, "key = value config file")->required();
  gc->add_option("--tol", tol, "max relative error")->capture_default_str();
  gc->add_option("--seed", gc_seed, "instance seed")->capture_default_str();

  // dump-attn
  std::size_t level = 0, pathway = 0, frame = 0;
  std::string step_text;
  auto* da = app.add_subcommand("dump-attn", "dense attention logits of one coupling substep");
  da->add_option("--ckpt", ckpt, "checkpoint path")->required();
  da->add_option("--data", data_dir, "dataset directory")->required();
  da->add_option("--level", level, "level index")->required();
  da->add_option("--pathway", pathway, "pathway index")->required();
  da->add_option("--step", step_text, "solid, fluid or interface")->required();
  da->add_option("--traj", traj_id, "trajectory id (default: first test trajectory)");
  da->add_option("--frame", frame, "input frame")->capture_default_str();
  da->add_option("--out", report_out, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gp->parsed()) {
      const Manifest m = generate_piston_dataset(piston_out, piston);
      print_json({{"dir", piston_out}, {"splits", split_summary(m)}}, "");
    } else if (gq->parsed()) {
      const Manifest m = generate_potential_dataset(potential_out, potential);
      print_json({{"dir", potential_out}, {"splits", split_summary(m)}}, "");
    } else if (sp->parsed()) {
      const Manifest m = build_manifest(split_dir, parse_ratios(ratios_text), split_seed);
      write_manifest(m, fs::path(split_dir) / kManifestName);
      print_json({{"dir", split_dir}, {"splits", split_summary(m)}}, "");
    } else if (tr->parsed()) {
      const RunConfig rc = read_run_config(config_path);
      const Dataset data = Dataset::open(data_dir);
      FisaleModel model(rc.model, data.manifest.layout(), rc.train.seed);
      std::ofstream log(log_path.empty() ? ckpt + ".log.csv" : log_path, std::ios::app);
      const TrainResult r = train_loop(model, data, rc.train, ckpt, &log);
      nlohmann::ordered_json j{{"checkpoint", ckpt},
                               {"steps", r.steps},
                               {"parameters", model.params().parameter_count()},
                               {"final_loss", r.losses.empty() ? 0.0 : r.losses.back()}};
      if (r.validated) {
        j["best_val"] = r.best_validation;
        j["best_step"] = r.best_step;
      }
      print_json(j, "");
    } else if (ev->parsed()) {
      auto model = load_model(ckpt);
      const Dataset data = Dataset::open(data_dir);
      const Split split = parse_split(split_text);
      auto j = evaluate_split(*model, data, split).to_json();
      j["split"] = split_name(split);
      print_json(j, report_out);
    } else if (ro->parsed()) {
      auto model = load_model(ckpt);
      const Dataset data = Dataset::open(data_dir);
      const RolloutResult r = rollout(*model, data, traj_id, rollout_steps);
      if (!save_dir.empty()) {
        fs::create_directories(save_dir);
        save_trajectory(r.predicted, save_dir);
      }
      auto j = r.report.to_json();
      j["trajectory"] = traj_id;
      j["steps"] = rollout_steps;
      print_json(j, report_out);
      if (r.report.failure_step) return 3;
    } else if (gc->parsed()) {
      const RunConfig rc = read_run_config(config_path);
      const GradCheckReport rep = model_grad_check(rc.model, gc_seed, tol);
      nlohmann::ordered_json entries = nlohmann::ordered_json::array();
      for (const auto& e : rep.entries) {
        entries.push_back({{"name", e.name},
                           {"max_relative_error", e.max_relative_error},
                           {"analytic", e.analytic},
                           {"numeric", e.numeric}});
      }
      print_json({{"passed", rep.passed()},
                  {"tolerance", rep.tolerance},
                  {"worst", rep.worst()},
                  {"entries", entries}},
                 "");
      return rep.passed() ? 0 : 1;
    } else if (da->parsed()) {
      auto model = load_model(ckpt);
      const Dataset data = Dataset::open(data_dir);
      if (traj_id.empty()) {
        auto ids = data.manifest.ids(Split::test);
        if (ids.empty()) ids = data.manifest.ids(Split::train);
        if (ids.empty()) throw std::invalid_argument("dataset has no trajectories to sample");
        traj_id = ids.front();
      }
      const Trajectory t = data.load(traj_id);
      if (frame >= t.frames.size()) throw std::out_of_range("frame index out of range");
      const SystemState input = normalize_state(t.frames[frame], data.manifest.stats);
      const AttentionDump dump =
          dump_attention(*model, input, level, pathway, parse_coupling_step(step_text));
      if (report_out.empty()) {
        write_attention_csv(dump, std::cout);
      } else {
        std::ofstream os(report_out, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + report_out);
        write_attention_csv(dump, os);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
