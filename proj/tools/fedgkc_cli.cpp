// fedgkc command-line entry point: gen-synth, partition, train, eval.
//
// On failure a single JSON object is printed to stderr, e.g.
//   {"error":"dataset","code":"count-mismatch","message":"..."}
// and the process exits with the code listed in ExitCode.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedgkc/fedgkc.hpp"

namespace fs = std::filesystem;
using namespace fedgkc;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConfig = 3,
  kDataset = 4,
  kIo = 5,
  kDiverged = 6,
};

int fail(ExitCode code, std::string_view kind, std::string_view detail_code, std::string_view message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["code"] = detail_code;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
  return code;
}

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<std::string> mode;
  std::optional<std::size_t> clients;
  std::optional<int> rounds;
  std::optional<std::size_t> workers;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Base seed");
    app.add_option("--strategy", strategy, "fedgkc | uniform-avg | volume-avg | local-only");
    app.add_option("--mode", mode, "arch | scale | homo");
    app.add_option("--clients", clients, "Number of clients K");
    app.add_option("--rounds", rounds, "Communication rounds T");
    app.add_option("--workers", workers, "Client worker threads");
  }

  /// Config file (if any) with command-line values layered on top.
  FederationConfig resolve() const {
    nlohmann::json j = nlohmann::json::object();
    if (!config.empty()) {
      try {
        j = nlohmann::json::parse(io::read_file(config));
      } catch (const nlohmann::json::parse_error& e) {
        throw io::ConfigError(std::string("malformed JSON: ") + e.what());
      }
    }
    if (seed) j["seed"] = *seed;
    if (strategy) j["strategy"] = *strategy;
    if (mode) j["mode"] = *mode;
    if (clients) j["clients"] = *clients;
    if (rounds) j["rounds"] = *rounds;
    if (workers) j["workers"] = *workers;
    return io::parse_config_json(j);
  }
};

std::vector<std::size_t> parse_blocks(const std::string& text) {
  std::vector<std::size_t> blocks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) blocks.push_back(std::stoul(item));
  return blocks;
}

int run_partition(const FederationConfig& cfg, const fs::path& dataset) {
  const Graph g = io::load_dataset(dataset);
  const ClientGraphs parts = partition_dataset(cfg, g);
  nlohmann::ordered_json j;
  j["nodes"] = g.num_nodes();
  j["edges"] = g.num_edges();
  j["communities"] = parts.communities.communities.size();
  j["modularity"] = parts.communities.modularity;
  auto& clients = j["clients"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < parts.graphs.size(); ++k) {
    const Graph& sub = parts.graphs[k];
    std::vector<std::size_t> per_class(sub.num_classes(), 0);
    for (int y : sub.labels()) ++per_class[static_cast<std::size_t>(y)];
    clients.push_back({{"client", k},
                       {"arch", assign_spec(k, cfg.clients, cfg.mode, cfg.hidden).name()},
                       {"nodes", sub.num_nodes()},
                       {"edges", sub.num_edges()},
                       {"train", sub.train().size()},
                       {"val", sub.val().size()},
                       {"test", sub.test().size()},
                       {"class_counts", per_class}});
  }
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int run_train(const FederationConfig& cfg, const fs::path& dataset, const fs::path& out) {
  const Graph g = io::load_dataset(dataset);
  const RunResult result = run(cfg, g);
  if (result.reports.empty()) return fail(kDiverged, "numeric", "divergence", result.aborted.value_or("no rounds"));
  io::write_outputs(result, cfg, out);
  std::cout << "final_mean_test_accuracy " << io::format_double(result.reports.back().mean_test_accuracy) << '\n';
  if (result.aborted) return fail(kDiverged, "numeric", "divergence", *result.aborted);
  return kOk;
}

/// Rebuilds the client graphs from the config echoed in summary.json and
/// scores the checkpointed local models.
int run_eval(const fs::path& dataset, const fs::path& out) {
  const auto summary = nlohmann::json::parse(io::read_file(out / "summary.json"));
  const FederationConfig cfg = io::parse_config_json(summary.at("config"));
  const Graph g = io::load_dataset(dataset);
  Federation fed = initialize_from_graphs(cfg, partition_dataset(cfg, g).graphs);
  const Parameters entries = io::read_checkpoint(out / "checkpoint.bin");
  nlohmann::ordered_json j;
  auto& clients = j["clients"] = nlohmann::ordered_json::array();
  double total = 0.0;
  for (auto& s : fed.clients) {
    Parameters local = io::checkpoint_group(entries, "client" + std::to_string(s.id));
    if (local.size() != s.local.size())
      throw io::IoError(out / "checkpoint.bin", "client " + std::to_string(s.id) + " parameters missing or incomplete");
    s.local = std::move(local);
    const double acc = evaluate(s);
    total += acc;
    clients.push_back({{"client", s.id}, {"arch", s.local_spec.name()}, {"test_acc", acc}});
  }
  j["mean_test_accuracy"] = total / static_cast<double>(fed.clients.size());
  std::cout << j.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated graph learning simulator"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-synth", "Write a stochastic-block-model dataset");
  std::string blocks_text = "150,150,150,150";
  io::SbmParams sbm;
  fs::path gen_out;
  gen->add_option("--blocks", blocks_text, "Comma-separated block sizes")->capture_default_str();
  gen->add_option("--p-in", sbm.p_in, "Intra-block edge probability")->capture_default_str();
  gen->add_option("--p-out", sbm.p_out, "Inter-block edge probability")->capture_default_str();
  gen->add_option("--features", sbm.features, "Feature dimension")->capture_default_str();
  gen->add_option("--seed", sbm.seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* part = app.add_subcommand("partition", "Print partition statistics without training");
  Overrides part_flags;
  fs::path part_dataset;
  part_flags.attach(*part);
  part->add_option("--dataset", part_dataset, "Dataset directory")->required();

  auto* train = app.add_subcommand("train", "Run federated training");
  Overrides train_flags;
  fs::path train_dataset, train_out;
  train_flags.attach(*train);
  train->add_option("--dataset", train_dataset, "Dataset directory")->required();
  train->add_option("--out", train_out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Score the local models of a finished run");
  fs::path eval_dataset, eval_out;
  eval->add_option("--dataset", eval_dataset, "Dataset directory")->required();
  eval->add_option("--out", eval_out, "Directory written by train")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", "bad-arguments", e.what());
  }

  try {
    if (*gen) {
      sbm.blocks = parse_blocks(blocks_text);
      const Graph g = io::gen_synthetic(sbm, gen_out);
      std::cout << "wrote " << g.num_nodes() << " nodes, " << g.num_edges() << " edges to " << gen_out.string() << '\n';
      return kOk;
    }
    if (*part) return run_partition(part_flags.resolve(), part_dataset);
    if (*train) return run_train(train_flags.resolve(), train_dataset, train_out);
    if (*eval) return run_eval(eval_dataset, eval_out);
  } catch (const io::ConfigError& e) {
    return fail(kConfig, "config", "invalid", e.what());
  } catch (const io::DatasetError& e) {
    return fail(kDataset, "dataset", io::errc_name(e.code()), e.what());
  } catch (const io::IoError& e) {
    return fail(kIo, "io", "failed", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(kIo, "io", "malformed-json", e.what());
  } catch (const PreconditionError& e) {
    return fail(kFailure, "precondition", "violated", e.what());
  } catch (const std::exception& e) {
    return fail(kFailure, "internal", "exception", e.what());
  }
  return kFailure;
}
