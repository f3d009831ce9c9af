#include "defurnish/config.hpp"
#include "defurnish/evaluation.hpp"
#include "defurnish/mesh_io.hpp"
#include "defurnish/pipeline.hpp"
#include "defurnish/synth.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace defurnish;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
  std::string labels;
  std::string hook_cmd;
  bool verbose = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool labels, bool hook) {
  cmd->add_option("--config", c.config_path, "Configuration file (key = value)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Global seed (overrides the config)");
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output directory")->required();
  if (labels) cmd->add_option("--labels", c.labels, "Per-face label sidecar (JSON)");
  if (hook) cmd->add_option("--hook-cmd", c.hook_cmd, "External inpainting command with {texture} {mask} {output}");
  cmd->add_flag("-v,--verbose", c.verbose, "Detailed log lines");
  cmd->add_flag("-q,--quiet", c.quiet, "Only errors");
}

PipelineConfig build_config(const Common& c) {
  PipelineConfig config = c.config_path.empty() ? PipelineConfig{} : load_config(c.config_path);
  if (c.seed) config.seed = *c.seed;
  if (!c.hook_cmd.empty()) {
    ExternalHook hook = config.hook.value_or(ExternalHook{});
    hook.command = c.hook_cmd;
    config.hook = hook;
  }
  config.check();
  return config;
}

RunOptions run_options(const Common& c) {
  RunOptions o;
  o.jobs = c.jobs;
  o.verbosity = c.quiet ? 0 : c.verbose ? 2 : 1;
  o.log = &std::cerr;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Turns a labeled, textured indoor scan mesh into an empty-room mesh."};
  app.require_subcommand(1);

  Common common;
  std::string mesh_path;
  std::string input_dir;

  auto* run = app.add_subcommand("run", "Run every stage; dumps go to <out>/<stage>/");
  run->add_option("mesh", mesh_path, "Input mesh (OBJ or PLY)")->required()->check(CLI::ExistingFile);
  add_common(run, common, true, true);

  auto* segment = app.add_subcommand("segment", "Plane segmentation of structural elements");
  segment->add_option("mesh", mesh_path, "Input mesh (OBJ or PLY)")->required()->check(CLI::ExistingFile);
  add_common(segment, common, true, false);

  std::map<std::string, Stage> dump_stages = {
      {"reconstruct", Stage::Reconstruct}, {"unwrap", Stage::Unwrap}, {"inpaint", Stage::Inpaint}, {"pack", Stage::Pack}};
  std::map<std::string, CLI::App*> dump_commands;
  const std::map<std::string, std::string> help = {
      {"reconstruct", "Remove loose objects and fill the holes (from a segment dump)"},
      {"unwrap", "Semantic UV charts (from a reconstruct dump)"},
      {"inpaint", "Rasterize charts and fill new texels (from an unwrap dump)"},
      {"pack", "Pack the atlas and write the final mesh (from an inpaint dump)"}};
  for (const auto& [name, stage] : dump_stages) {
    auto* cmd = app.add_subcommand(name, help.at(name));
    cmd->add_option("input", input_dir, "Previous stage's dump directory")->required()->check(CLI::ExistingDirectory);
    add_common(cmd, common, false, stage == Stage::Inpaint);
    dump_commands[name] = cmd;
  }

  std::uint64_t synth_seed = 42;
  double rotation = 0.0;
  double edge_length = 0.0;
  bool empty_room = false;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write the synthetic furnished room fixture and its ground truth");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Fixture seed");
  synth->add_option("--rotation", rotation, "Room rotation about +Z, degrees");
  synth->add_option("--edge-length", edge_length, "Triangle edge length, meters (default: standard fixture)");
  synth->add_flag("--empty", empty_room, "No objects");

  std::string result_mesh;
  std::string truth_path;
  std::string report_path;
  std::string eval_out;
  std::string eval_labels;
  int samples = 8;
  std::uint64_t eval_seed = 42;
  auto* eval = app.add_subcommand("eval", "Score a result mesh against a synthetic ground truth");
  eval->add_option("mesh", result_mesh, "Result mesh (e.g. pack/empty_room.obj)")->required()->check(CLI::ExistingFile);
  eval->add_option("--truth", truth_path, "truth.json from `synth`")->required()->check(CLI::ExistingFile);
  eval->add_option("--report", report_path, "Pipeline report.json")->check(CLI::ExistingFile);
  eval->add_option("--labels", eval_labels, "Label sidecar for the result mesh");
  eval->add_option("--samples", samples, "Texture samples per new face")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "Sampling seed");
  eval->add_option("--out", eval_out, "Metrics JSON path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  PipelineConfig config;
  if (!synth->parsed() && !eval->parsed()) {
    try {
      config = build_config(common);
    } catch (const Error& e) {
      std::cerr << "defurnish: " << e.what() << "\n";
      return kExitUsage;
    }
  }

  try {
    if (run->parsed()) {
      const auto outcome = run_pipeline(mesh_path, common.labels.empty() ? std::nullopt : std::optional<fs::path>(common.labels),
                                        config, common.out, run_options(common));
      return outcome.exit_code == 0 ? kExitOk : kExitFatal;
    }
    if (segment->parsed()) {
      const auto outcome = run_segment_stage(
          mesh_path, common.labels.empty() ? std::nullopt : std::optional<fs::path>(common.labels), config, common.out,
          run_options(common));
      return outcome.exit_code == 0 ? kExitOk : kExitFatal;
    }
    for (const auto& [name, cmd] : dump_commands) {
      if (!cmd->parsed()) continue;
      const auto outcome = run_stage(dump_stages.at(name), input_dir, config, common.out, run_options(common));
      return outcome.exit_code == 0 ? kExitOk : kExitFatal;
    }
    if (synth->parsed()) {
      RoomSpec spec = standard_room_spec(synth_seed);
      spec.rotation = rotation;
      if (edge_length > 0.0) spec.edge_length = edge_length;
      if (empty_room) spec.objects.clear();
      save_fixture(generate_room(spec), synth_out);
      std::cerr << "[defurnish] synth wrote " << (fs::path(synth_out) / "furnished.obj").string() << "\n";
      return kExitOk;
    }
    if (eval->parsed()) {
      const ClassMap classes = ClassMap::defaults();
      const GroundTruth truth = load_truth(truth_path, classes);
      const LabeledMesh result =
          load_mesh(result_mesh, eval_labels.empty() ? std::nullopt : std::optional<fs::path>(eval_labels), classes);
      const GeometricError geo = geometric_error(result, truth);
      const TextureError tex = texture_error(result, truth, samples, eval_seed);
      std::optional<nlohmann::json> report;
      if (!report_path.empty()) {
        std::ifstream in(report_path);
        report = nlohmann::json::parse(in);
      }
      const std::string text = metrics_report(geo, tex, report).dump(2) + "\n";
      if (eval_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(eval_out, std::ios::binary);
        out << text;
        if (!out) throw Error(ErrorKind::Io, "cannot write " + eval_out);
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "defurnish: " << e.what() << "\n";
    return kExitFatal;
  } catch (const std::exception& e) {
    std::cerr << "defurnish: " << e.what() << "\n";
    return kExitFatal;
  }
  return kExitUsage;
}
