#pragma once

// Layered INI-style configuration.
//
// A Config is a sorted (section, key) -> string map. `defaults()` carries the
// complete key set; file values and `--section.key=value` overrides merge on
// top and must name keys that already exist, so typos fail loudly instead of
// silently adding dead settings. `canonical_text()` is a normalized dump
// (sorted sections and keys) whose FNV-1a hash identifies the configuration
// inside checkpoints.

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "feedrank/errors.hpp"

namespace feedrank {

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct ModelSettings {
  std::int64_t embedding_dim = 32;  // d
  std::int64_t seq_len = 50;        // L, history capacity
  std::int64_t blocks = 2;          // stacked attention blocks
  std::int64_t experts = 4;         // N
  std::int64_t expert_hidden = 64;
  std::int64_t expert_out = 32;     // h
  std::int64_t slots = 8;           // S
  bool use_feedback_channels = true;
  std::string history_pool = "last";  // "last" | "mean"
  std::int64_t age_buckets = 8;
  std::int64_t locations = 16;
  std::int64_t categories = 32;
  bool include_location = true;

  std::int64_t width() const { return embedding_dim + 3; }  // encoder row width
  std::int64_t context_spans() const { return include_location ? 6 : 5; }
  std::int64_t context_width() const { return context_spans() * embedding_dim; }  // D
  std::int64_t task_input_width() const { return context_width() + width(); }
};

struct TrainSettings {
  std::string optimizer = "adam";  // "adam" | "sgd"
  double lr = 1e-3;
  std::int64_t batch_size = 32;
  std::int64_t epochs = 2;
  std::int64_t neg_ratio = 1;  // sampled negatives per positive
  std::uint64_t seed = 42;
  std::array<double, 3> lambda{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  // evv, fvv, gvv
  double split_frac = 0.8;  // time-quantile boundary between train and eval
  std::int64_t min_support = 5;
};

struct FusionSettings {
  std::array<double, 3> gamma{1.0, 1.0, -1.0};  // evv, fvv, gvv
  std::int64_t topk = 10;
};

struct WorldSettings {
  std::int64_t users = 1000;
  std::int64_t items = 5000;
  std::int64_t platforms = 3;
  std::int64_t latent_dim = 8;
  std::int64_t sessions_per_user = 4;
  std::int64_t session_len = 10;
  double median_duration_ms = 15000;
  double duration_sigma = 0.5;
  double affinity_scale = 1.8;
  double affinity_bias = -0.55;
  double drift_scale = 0.8;
  double mood_scale = 0.7;
  double noise = 0.6;
  double item_sigma = 0.55;
  double platform_effect = 0.3;
  std::int64_t session_gap_ms = 3600000;
  std::uint64_t seed = 1;
};

struct AbtestSettings {
  std::int64_t sessions_per_user = 3;
  std::int64_t session_len = 10;
  std::int64_t candidate_pool = 50;
  std::int64_t serve_chunk = 5;
  bool paired = false;  // false: even/odd user split; true: both arms serve everyone
  std::uint64_t seed = 7;
};

struct EvalSettings {
  std::int64_t neg_ratio = 1;
  std::int64_t pool = 100;
  std::int64_t topk = 10;
  std::int64_t max_users = 200;
  std::uint64_t seed = 99;
};

struct CardinalitySettings {
  std::int64_t users = 0;  // 0 means "derive from the data"
  std::int64_t items = 0;
  std::int64_t platforms = 0;
};

class Config {
 public:
  static Config defaults() {
    Config c;
    auto& m = c.kv_["model"];
    m["embedding_dim"] = "32";
    m["seq_len"] = "50";
    m["blocks"] = "2";
    m["experts"] = "4";
    m["expert_hidden"] = "64";
    m["expert_out"] = "32";
    m["slots"] = "8";
    m["use_feedback_channels"] = "true";
    m["history_pool"] = "last";
    m["age_buckets"] = "8";
    m["locations"] = "16";
    m["categories"] = "32";
    m["include_location"] = "true";
    auto& t = c.kv_["train"];
    t["optimizer"] = "adam";
    t["lr"] = "0.001";
    t["batch_size"] = "32";
    t["epochs"] = "2";
    t["neg_ratio"] = "1";
    t["seed"] = "42";
    t["lambda_evv"] = "0.333333";
    t["lambda_fvv"] = "0.333333";
    t["lambda_gvv"] = "0.333334";
    t["split_frac"] = "0.8";
    t["min_support"] = "5";
    auto& f = c.kv_["fusion"];
    f["gamma_evv"] = "1.0";
    f["gamma_fvv"] = "1.0";
    f["gamma_gvv"] = "-1.0";
    f["topk"] = "10";
    auto& w = c.kv_["world"];
    w["users"] = "1000";
    w["items"] = "5000";
    w["platforms"] = "3";
    w["latent_dim"] = "8";
    w["sessions_per_user"] = "4";
    w["session_len"] = "10";
    w["median_duration_ms"] = "15000";
    w["duration_sigma"] = "0.5";
    w["affinity_scale"] = "1.8";
    w["affinity_bias"] = "-0.55";
    w["drift_scale"] = "0.8";
    w["mood_scale"] = "0.7";
    w["noise"] = "0.6";
    w["item_sigma"] = "0.55";
    w["platform_effect"] = "0.3";
    w["session_gap_ms"] = "3600000";
    w["seed"] = "1";
    auto& a = c.kv_["abtest"];
    a["sessions_per_user"] = "3";
    a["session_len"] = "10";
    a["candidate_pool"] = "50";
    a["serve_chunk"] = "5";
    a["paired"] = "false";
    a["seed"] = "7";
    auto& e = c.kv_["eval"];
    e["neg_ratio"] = "1";
    e["pool"] = "100";
    e["topk"] = "10";
    e["max_users"] = "200";
    e["seed"] = "99";
    auto& d = c.kv_["cardinality"];
    d["users"] = "0";
    d["items"] = "0";
    d["platforms"] = "0";
    return c;
  }

  // Parses INI text into a bare Config (no defaults merged, no key checks).
  static Config parse(const std::string& text, const std::string& origin = "<string>") {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string_view s = trim(line);
      if (s.empty() || s.front() == '#' || s.front() == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw config_error(origin + ":" + std::to_string(line_no) + ": unterminated section");
        section = std::string(trim(s.substr(1, s.size() - 2)));
        if (section.empty())
          throw config_error(origin + ":" + std::to_string(line_no) + ": empty section name");
        c.kv_[section];
        continue;
      }
      const std::size_t eq = s.find('=');
      if (eq == std::string_view::npos)
        throw config_error(origin + ":" + std::to_string(line_no) + ": expected key = value");
      if (section.empty())
        throw config_error(origin + ":" + std::to_string(line_no) + ": key outside any section");
      const std::string key(trim(s.substr(0, eq)));
      const std::string value(trim(s.substr(eq + 1)));
      if (key.empty())
        throw config_error(origin + ":" + std::to_string(line_no) + ": empty key");
      c.kv_[section][key] = value;
    }
    return c;
  }

  static Config load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  // Overwrites with `other`'s values; every incoming key must already exist.
  void merge(const Config& other) {
    for (const auto& [section, keys] : other.kv_)
      for (const auto& [key, value] : keys) set(section + "." + key, value);
  }

  void set(const std::string& dotted, const std::string& value) {
    const std::size_t dot = dotted.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == dotted.size())
      throw config_error("config: expected section.key, got '" + dotted + "'");
    const std::string section = dotted.substr(0, dot);
    const std::string key = dotted.substr(dot + 1);
    auto sit = kv_.find(section);
    if (sit == kv_.end()) throw config_error("config: unknown section '" + section + "'");
    auto kit = sit->second.find(key);
    if (kit == sit->second.end())
      throw config_error("config: unknown key '" + section + "." + key + "'");
    kit->second = value;
  }

  bool has(const std::string& section, const std::string& key) const {
    auto sit = kv_.find(section);
    return sit != kv_.end() && sit->second.count(key) > 0;
  }

  const std::string& get_string(const std::string& section, const std::string& key) const {
    auto sit = kv_.find(section);
    if (sit == kv_.end()) throw config_error("config: unknown section '" + section + "'");
    auto kit = sit->second.find(key);
    if (kit == sit->second.end())
      throw config_error("config: unknown key '" + section + "." + key + "'");
    return kit->second;
  }

  std::int64_t get_int(const std::string& section, const std::string& key) const {
    const std::string& v = get_string(section, key);
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
      throw config_error("config: " + section + "." + key + " = '" + v + "' is not an integer");
    return out;
  }

  std::uint64_t get_uint(const std::string& section, const std::string& key) const {
    const std::string& v = get_string(section, key);
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
      throw config_error("config: " + section + "." + key + " = '" + v +
                         "' is not a non-negative integer");
    return out;
  }

  double get_double(const std::string& section, const std::string& key) const {
    const std::string& v = get_string(section, key);
    try {
      std::size_t pos = 0;
      const double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      if (!std::isfinite(out)) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw config_error("config: " + section + "." + key + " = '" + v + "' is not a number");
    }
  }

  bool get_bool(const std::string& section, const std::string& key) const {
    const std::string& v = get_string(section, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config: " + section + "." + key + " = '" + v + "' is not a boolean");
  }

  std::string canonical_text() const {
    std::ostringstream os;
    for (const auto& [section, keys] : kv_) {
      os << '[' << section << "]\n";
      for (const auto& [key, value] : keys) os << key << " = " << value << '\n';
    }
    return os.str();
  }

  std::uint64_t hash() const { return fnv1a64(canonical_text()); }

  // ---- typed views (validated on access) --------------------------------

  ModelSettings model() const {
    ModelSettings s;
    s.embedding_dim = positive_int("model", "embedding_dim");
    s.seq_len = positive_int("model", "seq_len");
    s.blocks = positive_int("model", "blocks");
    s.experts = positive_int("model", "experts");
    s.expert_hidden = positive_int("model", "expert_hidden");
    s.expert_out = positive_int("model", "expert_out");
    s.slots = positive_int("model", "slots");
    s.use_feedback_channels = get_bool("model", "use_feedback_channels");
    s.history_pool = get_string("model", "history_pool");
    if (s.history_pool != "last" && s.history_pool != "mean")
      throw config_error("config: model.history_pool must be 'last' or 'mean'");
    s.age_buckets = positive_int("model", "age_buckets");
    s.locations = positive_int("model", "locations");
    s.categories = positive_int("model", "categories");
    s.include_location = get_bool("model", "include_location");
    if (s.context_width() % s.slots != 0)
      throw config_error("config: model.slots = " + std::to_string(s.slots) +
                         " must divide the transformed width " +
                         std::to_string(s.context_width()));
    return s;
  }

  TrainSettings train() const {
    TrainSettings s;
    s.optimizer = get_string("train", "optimizer");
    if (s.optimizer != "adam" && s.optimizer != "sgd")
      throw config_error("config: train.optimizer must be 'adam' or 'sgd'");
    s.lr = get_double("train", "lr");
    if (s.lr < 0.0) throw config_error("config: train.lr must be >= 0");
    s.batch_size = positive_int("train", "batch_size");
    s.epochs = positive_int("train", "epochs");
    s.neg_ratio = get_int("train", "neg_ratio");
    if (s.neg_ratio < 0) throw config_error("config: train.neg_ratio must be >= 0");
    s.seed = get_uint("train", "seed");
    s.lambda = {get_double("train", "lambda_evv"), get_double("train", "lambda_fvv"),
                get_double("train", "lambda_gvv")};
    double sum = 0.0;
    for (double l : s.lambda) {
      if (l < 0.0) throw config_error("config: task loss weights must be non-negative");
      sum += l;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw config_error("config: task loss weights must sum to 1 (got " + std::to_string(sum) +
                         ")");
    if (sum != 1.0)
      for (double& l : s.lambda) l /= sum;
    s.split_frac = get_double("train", "split_frac");
    if (!(s.split_frac > 0.0 && s.split_frac <= 1.0))
      throw config_error("config: train.split_frac must be in (0, 1]");
    s.min_support = positive_int("train", "min_support");
    return s;
  }

  FusionSettings fusion() const {
    FusionSettings s;
    s.gamma = {get_double("fusion", "gamma_evv"), get_double("fusion", "gamma_fvv"),
               get_double("fusion", "gamma_gvv")};
    // the glance-and-skip head is a negative signal; its weight must not reward it
    if (s.gamma[2] > 0.0)
      throw config_error("config: fusion.gamma_gvv must be <= 0 (negative feedback)");
    s.topk = positive_int("fusion", "topk");
    return s;
  }

  WorldSettings world() const {
    WorldSettings s;
    s.users = positive_int("world", "users");
    s.items = positive_int("world", "items");
    s.platforms = positive_int("world", "platforms");
    s.latent_dim = positive_int("world", "latent_dim");
    s.sessions_per_user = positive_int("world", "sessions_per_user");
    s.session_len = positive_int("world", "session_len");
    s.median_duration_ms = get_double("world", "median_duration_ms");
    if (!(s.median_duration_ms > 0)) throw config_error("config: world.median_duration_ms <= 0");
    s.duration_sigma = get_double("world", "duration_sigma");
    s.affinity_scale = get_double("world", "affinity_scale");
    s.affinity_bias = get_double("world", "affinity_bias");
    s.drift_scale = get_double("world", "drift_scale");
    s.mood_scale = get_double("world", "mood_scale");
    s.noise = get_double("world", "noise");
    s.item_sigma = get_double("world", "item_sigma");
    s.platform_effect = get_double("world", "platform_effect");
    s.session_gap_ms = positive_int("world", "session_gap_ms");
    s.seed = get_uint("world", "seed");
    return s;
  }

  AbtestSettings abtest() const {
    AbtestSettings s;
    s.sessions_per_user = positive_int("abtest", "sessions_per_user");
    s.session_len = positive_int("abtest", "session_len");
    s.candidate_pool = positive_int("abtest", "candidate_pool");
    s.serve_chunk = positive_int("abtest", "serve_chunk");
    if (s.serve_chunk > s.session_len)
      throw config_error("config: abtest.serve_chunk must be <= abtest.session_len");
    s.paired = get_bool("abtest", "paired");
    s.seed = get_uint("abtest", "seed");
    return s;
  }

  EvalSettings eval() const {
    EvalSettings s;
    s.neg_ratio = get_int("eval", "neg_ratio");
    if (s.neg_ratio < 0) throw config_error("config: eval.neg_ratio must be >= 0");
    s.pool = positive_int("eval", "pool");
    s.topk = positive_int("eval", "topk");
    s.max_users = positive_int("eval", "max_users");
    s.seed = get_uint("eval", "seed");
    return s;
  }

  CardinalitySettings cardinality() const {
    CardinalitySettings s;
    s.users = nonneg_int("cardinality", "users");
    s.items = nonneg_int("cardinality", "items");
    s.platforms = nonneg_int("cardinality", "platforms");
    return s;
  }

  void set_cardinality(std::int64_t users, std::int64_t items, std::int64_t platforms) {
    kv_["cardinality"]["users"] = std::to_string(users);
    kv_["cardinality"]["items"] = std::to_string(items);
    kv_["cardinality"]["platforms"] = std::to_string(platforms);
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  }

  std::int64_t positive_int(const std::string& section, const std::string& key) const {
    const std::int64_t v = get_int(section, key);
    if (v <= 0) throw config_error("config: " + section + "." + key + " must be positive");
    return v;
  }

  std::int64_t nonneg_int(const std::string& section, const std::string& key) const {
    const std::int64_t v = get_int(section, key);
    if (v < 0) throw config_error("config: " + section + "." + key + " must be >= 0");
    return v;
  }

  std::map<std::string, std::map<std::string, std::string>> kv_;
};

}  // namespace feedrank
