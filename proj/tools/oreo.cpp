// oreo: world generation, pretraining, evaluation, ablation, path extraction
// and gradient checks from the command line.
//
// Exit codes: 0 success, 1 validation or input error, 2 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

#include "oreo/error.hpp"
#include "oreo/numerics/checkpoint.hpp"
#include "oreo/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace oreo;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

struct Loaded {
  num::ParamSet params;
  model::ModelConfig model;
  train::TrainConfig train;
};

Loaded load_model(const fs::path& ckpt) {
  auto c = num::load_checkpoint(ckpt);
  if (c.meta.value("format", "") != "oreo-model") throw InputError(ckpt.string() + ": not a model checkpoint");
  Loaded l{std::move(c.params), {}, {}};
  try {
    l.model = c.meta.at("model").get<model::ModelConfig>();
    if (c.meta.contains("train")) l.train = c.meta.at("train").get<train::TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ckpt.string() + ": " + e.what());
  }
  l.model.validate();
  return l;
}

void check_compatible(const model::ModelConfig& m, const synth::Dataset& d) {
  if (m.vocab_size != d.vocab.size() || m.num_entities != d.kg.num_entities() ||
      m.num_relations != d.kg.num_relations()) {
    throw ConfigError("checkpoint does not match the dataset (vocab, entities or relations differ)");
  }
}

// The dataset directory is the one holding the question file.
synth::Dataset dataset_for(const fs::path& qa_file) {
  auto d = synth::load_dataset(qa_file.parent_path().empty() ? fs::path(".") : qa_file.parent_path());
  d.qa = synth::load_qa(qa_file, d.kg);
  return d;
}

std::vector<synth::QAItem> held_out(const std::vector<synth::QAItem>& qa) {
  std::vector<synth::QAItem> out;
  for (const auto& q : qa) {
    if (q.held_out) out.push_back(q);
  }
  return out;
}

train::TrainConfig config_with_data(const fs::path& config, const std::string& data) {
  auto c = train::load_train_config(config);
  if (!data.empty()) c.data = data;
  if (c.data.empty()) throw ConfigError("no dataset: set \"data\" in the config or pass --data");
  return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oreo: knowledge-graph walks inside a transformer encoder"};
  app.require_subcommand(1);

  std::string spec_path, out, config_path, data_dir, ckpt, qa_path, remove_rel, drop, rel;
  bool eval_held_out = false;
  double tol = 1e-4;
  std::size_t coords = 200;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic world");
  gen->add_option("--spec", spec_path, "World spec (JSON); 'default' for the built-in world")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "Pretrain a model");
  pre->add_option("--config", config_path, "Train config (JSON)")->required();
  pre->add_option("--data", data_dir, "Dataset directory (overrides the config)");
  pre->add_option("--out", out, "Checkpoint path")->required();

  auto* ev = app.add_subcommand("eval", "Hits@1 on a question file");
  ev->add_option("--ckpt", ckpt, "Checkpoint")->required();
  ev->add_option("--qa", qa_path, "Question file (JSONL) inside a dataset directory")->required();
  ev->add_option("--remove-rel", remove_rel, "Drop every edge of this relation before evaluating");
  ev->add_flag("--held-out", eval_held_out, "Only the held-out split");
  ev->add_option("--out", out, "Metrics report (default stdout)");

  auto* abl = app.add_subcommand("ablate", "Train with and without the auxiliary losses");
  abl->add_option("--config", config_path, "Train config (JSON)")->required();
  abl->add_option("--drop", drop, "Losses to disable")->required()->check(CLI::IsMember({"ent", "rel", "both"}));
  abl->add_option("--data", data_dir, "Dataset directory (overrides the config)");
  abl->add_option("--out", out, "Report (default stdout)");

  auto* paths = app.add_subcommand("paths", "Extract reasoning paths for a relation");
  paths->add_option("--ckpt", ckpt, "Checkpoint")->required();
  paths->add_option("--rel", rel, "Probed relation; its edges are removed")->required();
  paths->add_option("--qa", qa_path, "Question file (JSONL) inside a dataset directory")->required();
  paths->add_option("--out", out, "Report")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full loss");
  gc->add_option("--ckpt", ckpt, "Checkpoint")->required();
  gc->add_option("--data", data_dir, "Dataset directory")->required();
  gc->add_option("--tol", tol, "Maximum relative error");
  gc->add_option("--coords", coords, "Coordinates per parameter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const auto spec = spec_path == "default" ? synth::WorldSpec::default_world()
                                               : read_json(spec_path).get<synth::WorldSpec>();
      spec.validate();
      synth::write_world(out, spec);
      const auto d = synth::load_dataset(out);
      std::cerr << "wrote " << out << ": " << d.kg.num_entities() << " entities, " << d.kg.num_edges() / 2
                << " base edges, " << d.passages.size() << " passages, " << d.qa.size() << " questions\n";
    } else if (*pre) {
      const auto cfg = config_with_data(config_path, data_dir);
      const auto d = synth::load_dataset(cfg.data);
      const auto t0 = std::chrono::steady_clock::now();
      fs::path dump = fs::path(out).concat(".bad_batch.json");
      const auto r = train::train(cfg, d, &std::cerr, dump);
      train::save_trained(out, cfg, r);
      std::cerr << "saved " << out << " after " << cfg.steps << " steps in " << seconds_since(t0) << " s\n";
    } else if (*ev) {
      auto m = load_model(ckpt);
      auto d = dataset_for(qa_path);
      check_compatible(m.model, d);
      const auto items = eval_held_out ? held_out(d.qa) : d.qa;
      const auto g = remove_rel.empty() ? d.kg : synth::remove_relation_edges(d.kg, remove_rel);
      const model::GraphContext graph(g);
      auto report = train::to_json(train::evaluate_qa(m.params, m.model, items, d.vocab, graph));
      report["removed_relation"] = remove_rel;
      write_json(out, report);
    } else if (*abl) {
      const auto cfg = config_with_data(config_path, data_dir);
      const auto d = synth::load_dataset(cfg.data);
      auto ablated = cfg;
      if (drop != "rel") ablated.lambda_ent = 0;
      if (drop != "ent") ablated.lambda_rel = 0;
      const auto test = held_out(d.qa);
      nlohmann::json report{{"drop", drop}, {"seed", cfg.seed}, {"steps", cfg.steps}};
      for (const auto& [name, c] : {std::pair{"full", cfg}, std::pair{"ablated", ablated}}) {
        std::cerr << "training " << name << '\n';
        auto r = train::train(c, d, &std::cerr);
        const model::GraphContext graph(d.kg);
        report[name] = train::to_json(train::evaluate_qa(r.params, r.model, test, d.vocab, graph));
      }
      report["full_better"] = report["full"]["hits1"].get<double>() > report["ablated"]["hits1"].get<double>();
      write_json(out, report);
    } else if (*paths) {
      auto m = load_model(ckpt);
      auto d = dataset_for(qa_path);
      check_compatible(m.model, d);
      std::vector<synth::QAItem> probes;
      for (const auto& q : d.qa) {
        if (q.relation == rel) probes.push_back(q);
      }
      const auto g = synth::remove_relation_edges(d.kg, rel);
      const model::GraphContext graph(g);
      write_json(out, train::to_json(train::extract_rules(m.params, m.model, rel, probes, d.vocab, graph)));
    } else if (*gc) {
      auto m = load_model(ckpt);
      const auto d = synth::load_dataset(data_dir);
      check_compatible(m.model, d);
      const auto batch = train::sample_gradcheck_batch(d, m.train, 2, 2);
      const model::GraphContext graph(d.kg);
      const auto r = train::grad_check(m.params, m.model, batch, graph, m.train.lambda_ent, m.train.lambda_rel,
                                       {.step = 1e-5, .coords_per_param = coords, .floor = 1e-6, .seed = 0});
      std::cout << nlohmann::json{{"max_rel_error", r.max_rel_error},
                                  {"checked", r.checked},
                                  {"worst", {{"param", r.worst.param}, {"coord", r.worst.coord},
                                             {"analytic", r.worst.analytic}, {"numeric", r.worst.numeric}}}}
                       .dump(2)
                << '\n';
      if (!(r.max_rel_error < tol)) {
        std::cerr << "gradient check failed: " << r.max_rel_error << " >= " << tol << '\n';
        return 2;
      }
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
