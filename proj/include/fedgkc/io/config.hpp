#pragma once

// JSON run configuration. Every key is optional except "clients"; see the
// README for the full schema. Unknown keys are rejected in strict mode.

#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fedgkc/federation.hpp"
#include "fedgkc/io/text.hpp"

namespace fedgkc::io {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

using Json = nlohmann::json;

inline void check_keys(const Json& obj, std::string_view where, std::initializer_list<std::string_view> allowed,
                       bool strict) {
  if (!obj.is_object()) throw ConfigError(std::string(where.empty() ? "config" : where) + ": expected an object");
  if (!strict) return;
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known)
      throw ConfigError("unknown key '" + (where.empty() ? std::string{} : std::string(where) + ".") + key + "'");
  }
}

template <class T>
void read(const Json& obj, const char* key, T& out, std::string_view where = {}) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("key '" + (where.empty() ? std::string{} : std::string(where) + ".") + key +
                      "' has the wrong type");
  }
}

template <class Enum, class Parse>
void read_enum(const Json& obj, const char* key, Enum& out, Parse parse, std::string_view where = {}) {
  std::string text;
  bool present = obj.contains(key);
  read(obj, key, text, where);
  if (!present) return;
  try {
    out = parse(text);
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

inline MutualView parse_mutual_view(std::string_view s) {
  if (s == "weak") return MutualView::Weak;
  if (s == "original") return MutualView::Original;
  throw PreconditionError("expected 'weak' or 'original', got '" + std::string(s) + "'");
}

inline std::string_view mutual_view_name(MutualView v) { return v == MutualView::Weak ? "weak" : "original"; }

inline KnowledgeNodeSet parse_node_set(std::string_view s) {
  if (s == "train") return KnowledgeNodeSet::Train;
  if (s == "all") return KnowledgeNodeSet::All;
  throw PreconditionError("expected 'train' or 'all', got '" + std::string(s) + "'");
}

inline std::string_view node_set_name(KnowledgeNodeSet s) { return s == KnowledgeNodeSet::Train ? "train" : "all"; }

}  // namespace detail

/// Parses and validates a configuration document.
inline FederationConfig parse_config_json(const nlohmann::json& j, bool strict = true) {
  using detail::read;
  using detail::read_enum;
  detail::check_keys(j, "",
                     {"clients", "rounds", "local_epochs", "mode", "strategy", "alpha", "beta", "lambda", "hidden",
                      "copilot", "ablation", "optimizer", "augmentation", "mutual_on_view", "kama_node_set",
                      "select_best_on_val", "split", "seed", "workers"},
                     strict);
  if (!j.contains("clients")) throw ConfigError("missing required key 'clients'");

  FederationConfig c;
  read(j, "clients", c.clients);
  read(j, "rounds", c.rounds);
  read(j, "local_epochs", c.local_epochs);
  read_enum(j, "mode", c.mode, parse_mode);
  read_enum(j, "strategy", c.strategy, parse_strategy);
  read(j, "alpha", c.weights.alpha);
  read(j, "beta", c.weights.beta);
  read(j, "lambda", c.weights.lambda_smooth);
  read(j, "hidden", c.hidden);
  read_enum(j, "mutual_on_view", c.mutual_on_view, detail::parse_mutual_view);
  read_enum(j, "kama_node_set", c.kama_node_set, detail::parse_node_set);
  read(j, "select_best_on_val", c.select_best_on_val);
  read(j, "seed", c.seed);
  read(j, "workers", c.workers);

  if (auto it = j.find("copilot"); it != j.end()) {
    detail::check_keys(*it, "copilot", {"arch", "depth"}, strict);
    read_enum(*it, "arch", c.copilot_arch, parse_arch, "copilot");
    read(*it, "depth", c.copilot_depth, "copilot");
  }
  if (auto it = j.find("ablation"); it != j.end()) {
    detail::check_keys(*it, "ablation",
                       {"disable_self_distill", "disable_mutual", "disable_kama_strength", "disable_kama_clarity"},
                       strict);
    read(*it, "disable_self_distill", c.ablation.disable_self_distill, "ablation");
    read(*it, "disable_mutual", c.ablation.disable_mutual, "ablation");
    read(*it, "disable_kama_strength", c.ablation.disable_kama_strength, "ablation");
    read(*it, "disable_kama_clarity", c.ablation.disable_kama_clarity, "ablation");
  }
  if (auto it = j.find("optimizer"); it != j.end()) {
    detail::check_keys(*it, "optimizer", {"lr", "beta1", "beta2", "eps", "weight_decay"}, strict);
    read(*it, "lr", c.optimizer.learning_rate, "optimizer");
    read(*it, "beta1", c.optimizer.beta1, "optimizer");
    read(*it, "beta2", c.optimizer.beta2, "optimizer");
    read(*it, "eps", c.optimizer.epsilon, "optimizer");
    read(*it, "weight_decay", c.optimizer.weight_decay, "optimizer");
  }
  if (auto it = j.find("augmentation"); it != j.end()) {
    detail::check_keys(*it, "augmentation",
                       {"weak_edge_drop", "weak_feature_mask", "strong_edge_drop", "strong_feature_mask",
                        "resample_views"},
                       strict);
    read(*it, "weak_edge_drop", c.augmentation.weak_edge_drop, "augmentation");
    read(*it, "weak_feature_mask", c.augmentation.weak_feature_mask, "augmentation");
    read(*it, "strong_edge_drop", c.augmentation.strong_edge_drop, "augmentation");
    read(*it, "strong_feature_mask", c.augmentation.strong_feature_mask, "augmentation");
    read(*it, "resample_views", c.resample_views, "augmentation");
  }
  if (auto it = j.find("split"); it != j.end()) {
    detail::check_keys(*it, "split", {"train", "val", "test"}, strict);
    read(*it, "train", c.split.train, "split");
    read(*it, "val", c.split.val, "split");
    read(*it, "test", c.split.test, "split");
  }

  try {
    c.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline FederationConfig parse_config_text(std::string_view text, bool strict = true) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return parse_config_json(j, strict);
}

inline FederationConfig parse_config(const std::filesystem::path& path, bool strict = true) {
  return parse_config_text(read_file(path), strict);
}

/// Full serialisation with every field spelled out; parse_config_json of the
/// result reproduces `c` exactly.
inline nlohmann::ordered_json config_to_json(const FederationConfig& c) {
  nlohmann::ordered_json j;
  j["clients"] = c.clients;
  j["rounds"] = c.rounds;
  j["local_epochs"] = c.local_epochs;
  j["mode"] = mode_name(c.mode);
  j["strategy"] = strategy_name(c.strategy);
  j["alpha"] = c.weights.alpha;
  j["beta"] = c.weights.beta;
  j["lambda"] = c.weights.lambda_smooth;
  j["hidden"] = c.hidden;
  j["copilot"] = {{"arch", arch_name(c.copilot_arch)}, {"depth", c.copilot_depth}};
  j["ablation"] = {{"disable_self_distill", c.ablation.disable_self_distill},
                   {"disable_mutual", c.ablation.disable_mutual},
                   {"disable_kama_strength", c.ablation.disable_kama_strength},
                   {"disable_kama_clarity", c.ablation.disable_kama_clarity}};
  j["optimizer"] = {{"lr", c.optimizer.learning_rate},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.epsilon},
                    {"weight_decay", c.optimizer.weight_decay}};
  j["augmentation"] = {{"weak_edge_drop", c.augmentation.weak_edge_drop},
                       {"weak_feature_mask", c.augmentation.weak_feature_mask},
                       {"strong_edge_drop", c.augmentation.strong_edge_drop},
                       {"strong_feature_mask", c.augmentation.strong_feature_mask},
                       {"resample_views", c.resample_views}};
  j["mutual_on_view"] = detail::mutual_view_name(c.mutual_on_view);
  j["kama_node_set"] = detail::node_set_name(c.kama_node_set);
  j["select_best_on_val"] = c.select_best_on_val;
  j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  return j;
}

}  // namespace fedgkc::io
