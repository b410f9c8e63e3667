// Command-line entry points: generate, train, infer, eval, skeletonize, split.
// Exit codes: 0 success, 2 usage/config error, 3 data validation error,
// 4 numerical error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "topolab/topolab.hpp"

namespace fs = std::filesystem;
using topolab::io::json;

namespace {

struct GlobalArgs {
  std::string topology_path;
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

topolab::CategoryTopology resolve_topology(const GlobalArgs& g) {
  if (!g.topology_path.empty()) return topolab::io::load_topology(g.topology_path);
  if (fs::exists("config/topology_14.json"))
    return topolab::io::load_topology("config/topology_14.json");
  return topolab::default_topology();
}

json resolve_config(const GlobalArgs& g) {
  if (g.config_path.empty()) return json::object();
  return topolab::io::load_json(g.config_path);
}

int resolve_threads(const GlobalArgs& g) {
  return g.threads > 0 ? g.threads : static_cast<int>(topolab::default_threads());
}

void echo(const char* section, const json& j) {
  std::cout << "resolved " << section << " config: " << j.dump() << "\n";
}

int cmd_generate(const GlobalArgs& g, const std::string& out_dir, int cases, bool volumes,
                 bool emit_centerline) {
  topolab::CategoryTopology topo = resolve_topology(g);
  json cfg_json = resolve_config(g);
  topolab::synth::GeneratorConfig gc;
  if (cfg_json.contains("generator"))
    gc = topolab::io::generator_config_from_json(cfg_json.at("generator"));
  if (cases > 0) gc.cases = cases;
  if (g.seed_set) gc.seed = g.seed;
  if (volumes) gc.emit_volumes = true;
  gc.validate(topo);
  echo("generator", topolab::io::generator_config_to_json(gc));

  std::vector<topolab::synth::SynthCase> dataset =
      topolab::synth::generate_dataset(gc, topo, resolve_threads(g));
  if (emit_centerline) {
    fs::create_directories(out_dir);
    json names = json::array();
    for (const auto& sc : dataset) {
      topolab::io::CaseFile cf;
      cf.id = sc.id;
      cf.graph = sc.graph;
      cf.graph_roots = sc.graph_roots;
      std::string name = sc.id + ".json";
      topolab::io::save_case(out_dir + "/" + name, cf);
      names.push_back(name);
    }
    topolab::io::save_json(out_dir + "/dataset.json", json{{"cases", names}});
  } else {
    topolab::io::save_dataset(out_dir, dataset);
  }
  std::cout << "wrote " << dataset.size() << " cases to " << out_dir << "\n";
  return 0;
}

topolab::ModelConfig model_config_from(const json& cfg_json, const std::string& backend,
                                       const std::string& aggregator,
                                       const std::string& interaction,
                                       const std::string& classifier) {
  topolab::ModelConfig mc;
  if (cfg_json.contains("model")) mc = topolab::io::model_config_from_json(cfg_json.at("model"));
  if (!backend.empty()) mc.feature_backend = backend;
  if (!aggregator.empty()) mc.aggregator = aggregator;
  if (!interaction.empty()) mc.interaction = interaction;
  if (!classifier.empty()) mc.classifier = classifier;
  mc.validate();
  return mc;
}

int cmd_train(const GlobalArgs& g, const std::string& data_dir, const std::string& out_dir,
              long iters, double lr, int batch, const std::string& backend,
              const std::string& aggregator, const std::string& interaction,
              const std::string& classifier) {
  topolab::CategoryTopology topo = resolve_topology(g);
  json cfg_json = resolve_config(g);
  topolab::ModelConfig mc = model_config_from(cfg_json, backend, aggregator, interaction, classifier);
  topolab::TrainConfig tc;
  if (cfg_json.contains("train")) tc = topolab::io::train_config_from_json(cfg_json.at("train"));
  if (iters > 0) tc.total_iterations = iters;
  if (lr > 0) tc.base_lr = lr;
  if (batch > 0) tc.batch_size = batch;
  if (g.seed_set) tc.seed = g.seed;
  tc.validate();
  echo("model", topolab::io::model_config_to_json(mc));
  echo("train", topolab::io::train_config_to_json(tc));

  std::vector<topolab::io::CaseFile> files = topolab::io::load_dataset(data_dir);
  topolab::Model model(mc, topo, tc.seed);
  topolab::io::PreparedDataset prepared = topolab::io::prepare_dataset(
      files, topo, model.templates(), mc.feature_backend == "conv");
  for (const auto& d : prepared.diagnostics) std::cout << "excluded case: " << d << "\n";
  std::cout << "training on " << prepared.cases.size() << " cases\n";

  topolab::TrainResult result = topolab::train(model, prepared.cases, tc, out_dir);
  std::cout << "final loss " << result.losses.back() << ", checkpoint " << result.final_checkpoint
            << "\n";
  return 0;
}

int cmd_infer(const GlobalArgs& g, const std::string& data_dir, const std::string& checkpoint,
              const std::string& out_path, const std::string& backend,
              const std::string& aggregator, const std::string& interaction,
              const std::string& classifier) {
  topolab::CategoryTopology topo = resolve_topology(g);
  json cfg_json = resolve_config(g);
  topolab::ModelConfig mc = model_config_from(cfg_json, backend, aggregator, interaction, classifier);
  echo("model", topolab::io::model_config_to_json(mc));

  topolab::Model model(mc, topo, 0);
  model.params().load(checkpoint);
  std::vector<topolab::io::CaseFile> files = topolab::io::load_dataset(data_dir);
  topolab::io::PreparedDataset prepared = topolab::io::prepare_dataset(
      files, topo, model.templates(), mc.feature_backend == "conv");
  for (const auto& d : prepared.diagnostics) std::cout << "excluded case: " << d << "\n";
  if (prepared.cases.empty()) throw topolab::EmptyInputError("no valid cases to infer on");

  std::vector<topolab::CasePrediction> preds(prepared.cases.size());
  topolab::parallel_for(prepared.cases.size(), resolve_threads(g),
                        [&](std::size_t i) { preds[i] = model.infer(prepared.cases[i]); });
  topolab::io::save_json(out_path, topolab::io::predictions_to_json(preds, topo));
  std::cout << "wrote predictions for " << preds.size() << " cases to " << out_path << "\n";
  return 0;
}

int cmd_eval(const GlobalArgs& g, const std::string& pred_path, const std::string& data_dir,
             const std::string& out_path, bool undirected) {
  topolab::CategoryTopology topo = resolve_topology(g);
  std::vector<topolab::CasePrediction> preds =
      topolab::io::predictions_from_json(topolab::io::load_json(pred_path), topo);
  std::vector<topolab::io::CaseFile> files = topolab::io::load_dataset(data_dir);

  std::vector<topolab::CaseEvaluation> evals;
  for (const auto& cf : files) {
    if (!cf.has_tree) throw topolab::MalformedCaseError("case " + cf.id + " has no gold segments");
    const topolab::CasePrediction* cp = nullptr;
    for (const auto& p : preds)
      if (p.id == cf.id) cp = &p;
    if (!cp) throw topolab::InputError("no prediction for case " + cf.id);
    topolab::CaseEvaluation ce;
    int n = cf.tree.segment_count();
    ce.gold.resize(n);
    for (int s = 0; s < n; ++s) {
      if (cf.tree.segments[s].gold_class.empty())
        throw topolab::LabelError("case " + cf.id + ": segment without gold class");
      ce.gold[s] = topo.class_index(cf.tree.segments[s].gold_class);
    }
    ce.pred.assign(n, -1);
    for (const auto& sp : cp->segments) {
      if (sp.segment < 0 || sp.segment >= n)
        throw topolab::InputError("case " + cf.id + ": prediction for unknown segment");
      ce.pred[sp.segment] = sp.class_index;
    }
    for (int s = 0; s < n; ++s)
      if (ce.pred[s] < 0)
        throw topolab::InputError("case " + cf.id + ": missing prediction for segment " +
                                  std::to_string(s));
    ce.connections = cf.tree.connections;
    evals.push_back(std::move(ce));
  }
  topolab::MetricsReport rep = topolab::evaluate(evals, topo, undirected);
  std::cout << topolab::format_table(rep);
  if (!out_path.empty()) topolab::io::save_json(out_path, topolab::io::report_to_json(rep));
  return 0;
}

int cmd_skeletonize(const GlobalArgs&, const std::string& volume_path, const std::string& out_path,
                    double threshold) {
  topolab::IntensityVolume vol = topolab::io::load_volume(volume_path);
  topolab::BinaryVolume mask;
  mask.dims = vol.dims;
  mask.spacing = vol.spacing;
  for (int z = 0; z < vol.dims[2]; ++z)
    for (int y = 0; y < vol.dims[1]; ++y)
      for (int x = 0; x < vol.dims[0]; ++x)
        if (vol.at(x, y, z) >= threshold) mask.foreground.push_back({x, y, z});
  mask.normalize();
  topolab::BinaryVolume skeleton = topolab::skeletonize(mask);
  topolab::io::CaseFile cf;
  cf.id = fs::path(volume_path).stem().string();
  cf.graph = topolab::to_centerline_graph(skeleton);
  topolab::io::save_case(out_path, cf);
  std::cout << "skeleton: " << skeleton.foreground.size() << " voxels, "
            << cf.graph.edges.size() << " edges -> " << out_path << "\n";
  return 0;
}

int cmd_split(const GlobalArgs&, const std::string& case_path, const std::string& out_path,
              std::vector<std::string> root_specs) {
  topolab::io::CaseFile cf = topolab::io::load_case(case_path);
  if (cf.has_tree) throw topolab::MalformedCaseError(case_path + ": already split into segments");
  std::vector<std::pair<topolab::Domain, int>> roots = cf.graph_roots;
  for (const auto& spec : root_specs) {
    // DOMAIN:x,y,z selects the node nearest to the given world position.
    auto colon = spec.find(':');
    if (colon == std::string::npos)
      throw topolab::ConfigError("--root expects DOMAIN:x,y,z, got " + spec);
    topolab::Domain d = topolab::parse_domain(spec.substr(0, colon));
    topolab::Vec3 p;
    if (std::sscanf(spec.c_str() + colon + 1, "%lf,%lf,%lf", &p.x, &p.y, &p.z) != 3)
      throw topolab::ConfigError("--root expects DOMAIN:x,y,z, got " + spec);
    int best = -1;
    double best_d = 0;
    for (std::size_t i = 0; i < cf.graph.positions.size(); ++i) {
      double dist = topolab::distance(cf.graph.positions[i], p);
      if (best < 0 || dist < best_d) {
        best = static_cast<int>(i);
        best_d = dist;
      }
    }
    if (best < 0) throw topolab::EmptyInputError("case has no centerline points");
    roots.emplace_back(d, best);
  }
  topolab::VesselTree tree = topolab::build_vessel_tree(cf.graph, roots);
  topolab::io::CaseFile out;
  out.id = cf.id;
  out.has_tree = true;
  out.tree = tree;
  out.volume_ref = cf.volume_ref;
  topolab::io::save_case(out_path, out);
  std::cout << "split into " << tree.segment_count() << " segments, "
            << tree.connection_count() << " connections -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TopoLab: topology-aware coronary artery segment labeling"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--topology", g.topology_path, "Category topology JSON (default: built-in 14-class tree)");
  app.add_option("--config", g.config_path, "Config JSON with model/train/generator sections");
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--threads", g.threads, "Worker threads (default: hardware)");

  auto* gen = app.add_subcommand("generate", "Generate a synthetic labeled dataset");
  std::string gen_out;
  int gen_cases = 0;
  bool gen_volumes = false, gen_centerline = false;
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--cases", gen_cases, "Number of cases");
  gen->add_flag("--volumes", gen_volumes, "Also rasterize intensity volumes");
  gen->add_flag("--emit-centerline", gen_centerline, "Emit raw centerline graphs instead of segments");

  std::string backend, aggregator, interaction, classifier;
  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--backend", backend, "Feature backend: coord-mlp | conv");
    cmd->add_option("--aggregator", aggregator, "Segment aggregator: transformer | mean");
    cmd->add_option("--interaction", interaction, "Segment interaction: gcn | none");
    cmd->add_option("--classifier", classifier, "Classifier head: ac | linear");
  };

  auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
  std::string train_data, train_out;
  long train_iters = 0;
  double train_lr = 0;
  int train_batch = 0;
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", train_out, "Output directory for checkpoints and log")->required();
  train->add_option("--iters", train_iters, "Total iterations");
  train->add_option("--lr", train_lr, "Base learning rate");
  train->add_option("--batch", train_batch, "Batch size");
  add_model_flags(train);

  auto* infer = app.add_subcommand("infer", "Predict segment classes with a trained checkpoint");
  std::string infer_data, infer_ckpt, infer_out;
  infer->add_option("--data", infer_data, "Dataset directory")->required();
  infer->add_option("--checkpoint", infer_ckpt, "Checkpoint file")->required();
  infer->add_option("--out", infer_out, "Output predictions JSON")->required();
  add_model_flags(infer);

  auto* eval = app.add_subcommand("eval", "Score predictions against gold labels");
  std::string eval_pred, eval_data, eval_out;
  bool eval_undirected = false;
  eval->add_option("--pred", eval_pred, "Predictions JSON")->required();
  eval->add_option("--data", eval_data, "Dataset directory with gold labels")->required();
  eval->add_option("--out", eval_out, "Output report JSON");
  eval->add_flag("--undirected-viola", eval_undirected, "Accept reversed edges as valid");

  auto* skel = app.add_subcommand("skeletonize", "Thin a volume to a centerline case file");
  std::string skel_vol, skel_out;
  double skel_threshold = 0.5;
  skel->add_option("--volume", skel_vol, "Volume header JSON")->required();
  skel->add_option("--out", skel_out, "Output case JSON")->required();
  skel->add_option("--threshold", skel_threshold, "Foreground threshold (default 0.5)");

  auto* split = app.add_subcommand("split", "Split a centerline case into labeled-ready segments");
  std::string split_case, split_out;
  std::vector<std::string> split_roots;
  split->add_option("--case", split_case, "Centerline case JSON")->required();
  split->add_option("--out", split_out, "Output case JSON")->required();
  split->add_option("--root", split_roots, "Root as DOMAIN:x,y,z (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_generate(g, gen_out, gen_cases, gen_volumes, gen_centerline);
    if (train->parsed())
      return cmd_train(g, train_data, train_out, train_iters, train_lr, train_batch, backend,
                       aggregator, interaction, classifier);
    if (infer->parsed())
      return cmd_infer(g, infer_data, infer_ckpt, infer_out, backend, aggregator, interaction,
                       classifier);
    if (eval->parsed()) return cmd_eval(g, eval_pred, eval_data, eval_out, eval_undirected);
    if (skel->parsed()) return cmd_skeletonize(g, skel_vol, skel_out, skel_threshold);
    if (split->parsed()) return cmd_split(g, split_case, split_out, split_roots);
  } catch (const topolab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const topolab::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const topolab::ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 4;
  } catch (const topolab::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
