// feedrank: train and serve an implicit-feedback short-video ranker.
//
// Subcommands:
//   simulate  generate a synthetic watch log
//   train     fit a model on a watch log and write a checkpoint
//   eval      score a checkpoint against the held-out tail of a log
//   rank      rank candidate items for one user
//   abtest    serve two checkpoints side by side in a simulated A/B test
//
// Every command prints a human-readable summary to stdout (progress goes to
// stderr) and can write the same result as JSON via --json PATH ("-" for
// stdout). Exit codes: 0 ok, 1 usage/config, 2 data, 3 numeric.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "feedrank/feedrank.hpp"

namespace fr = feedrank;
using ordered_json = nlohmann::ordered_json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path,
                  "INI configuration file merged over the built-in defaults")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides,
                  "Override one setting as section.key=value (repeatable)");
}

// Layering: defaults -> checkpoint-embedded config -> --config file -> --set.
fr::Config assemble_config(const CommonOpts& c, const std::string* checkpoint_text) {
  fr::Config cfg = fr::Config::defaults();
  if (checkpoint_text) cfg.merge(fr::Config::parse(*checkpoint_text, "<checkpoint>"));
  if (!c.config_path.empty()) cfg.merge(fr::Config::load_file(c.config_path));
  for (const std::string& kv : c.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == kv.size())
      throw fr::usage_error("--set expects section.key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

// Table sizes for a fresh model: configured values win when present, but must
// cover every id the log actually contains.
fr::ModelCardinality resolve_cardinality(const fr::Config& cfg, const fr::Dataset& ds) {
  const fr::CardinalitySettings card = cfg.cardinality();
  auto pick = [](const char* what, std::int64_t configured, std::int64_t derived) {
    if (configured == 0) return derived;
    if (configured < derived)
      throw fr::config_error("cardinality." + std::string(what) + " = " +
                             std::to_string(configured) + " is smaller than the log needs (" +
                             std::to_string(derived) + ")");
    return configured;
  };
  return {pick("users", card.users, ds.num_users), pick("items", card.items, ds.num_items),
          pick("platforms", card.platforms, ds.num_platforms)};
}

void require_log_fits(const fr::Model& model, const fr::Dataset& ds) {
  const auto& card = model.cardinality();
  if (ds.num_users > card.users || ds.num_items > card.items ||
      ds.num_platforms > card.platforms)
    throw fr::data_error("log contains ids outside the model's tables (log needs " +
                         std::to_string(ds.num_users) + " users / " +
                         std::to_string(ds.num_items) + " items / " +
                         std::to_string(ds.num_platforms) + " platforms)");
}

void emit_json(const std::string& path, const ordered_json& j) {
  if (path.empty()) return;
  if (path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw fr::data_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw fr::data_error("write failed for '" + path + "'");
}

ordered_json opt_json(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::vector<std::int64_t> parse_id_list(const std::string& csv) {
  std::vector<std::int64_t> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t end = csv.find(',', start);
    if (end == std::string::npos) end = csv.size();
    const std::string_view field(csv.data() + start, end - start);
    if (field.empty())
      throw fr::usage_error("--items: empty id in list '" + csv + "'");
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size())
      throw fr::usage_error("--items: '" + std::string(field) + "' is not an integer");
    out.push_back(v);
    if (end == csv.size()) break;
    start = end + 1;
  }
  if (out.empty()) throw fr::usage_error("--items: empty list");
  return out;
}

// ---- simulate --------------------------------------------------------------

int cmd_simulate(const CommonOpts& common, const std::string& out_path,
                 const std::string& json_path) {
  const fr::Config cfg = assemble_config(common, nullptr);
  const fr::WorldSettings ws = cfg.world();
  const fr::ModelSettings ms = cfg.model();

  std::cerr << "generating world: " << ws.users << " users, " << ws.items << " items, seed "
            << ws.seed << "\n";
  const fr::LatentWorld world = fr::generate_world(ws, ms.categories);
  const auto records = fr::generate_log(world, ws.sessions_per_user, ws.session_len, ws.seed);
  fr::write_log(out_path, records);

  const fr::Dataset ds = fr::build_dataset(records, cfg.train().min_support);
  std::int64_t evv = 0, fvv = 0, gvv = 0;
  for (const auto& [user, recs] : ds.user_records) {
    for (const auto& r : recs) {
      const fr::FeedbackFlags f = fr::classify_feedback(r, ds.stats.for_item(r.item_id));
      evv += f.evv;
      fvv += f.fvv;
      gvv += f.gvv;
    }
  }
  const double n = static_cast<double>(ds.record_count);

  std::printf("wrote %zu records to %s\n", ds.record_count, out_path.c_str());
  std::printf("users %lld, items %lld, platforms %lld\n",
              static_cast<long long>(ds.num_users), static_cast<long long>(ds.num_items),
              static_cast<long long>(ds.num_platforms));
  std::printf("feedback rates: effective %.4f, finished-style %.4f, glance %.4f\n",
              evv / n, fvv / n, gvv / n);

  emit_json(json_path, ordered_json{{"log", out_path},
                                    {"records", ds.record_count},
                                    {"users", ds.num_users},
                                    {"items", ds.num_items},
                                    {"platforms", ds.num_platforms},
                                    {"evv_rate", evv / n},
                                    {"fvv_rate", fvv / n},
                                    {"gvv_rate", gvv / n}});
  return 0;
}

// ---- train -------------------------------------------------------------------

int cmd_train(const CommonOpts& common, const std::string& log_path, const std::string& out_path,
              const std::string& metrics_path, const std::string& json_path) {
  const fr::Config cfg = assemble_config(common, nullptr);
  std::cerr << "reading log " << log_path << "\n";
  const fr::Dataset ds = fr::ingest_log(log_path, cfg.train().min_support);
  const fr::ModelCardinality card = resolve_cardinality(cfg, ds);

  fr::Model model(cfg.model(), card, cfg.train().seed);
  std::cerr << "training on " << ds.record_count << " records ("
            << model.named_params().size() << " parameter tensors)\n";
  const fr::TrainOutput out = fr::train_model(model, ds, cfg);

  for (const auto& em : out.metrics)
    std::fprintf(stderr, "epoch %lld: mean loss %.6f over %lld examples (%lld ms)\n",
                 static_cast<long long>(em.epoch), em.mean_loss,
                 static_cast<long long>(em.examples), static_cast<long long>(em.duration_ms));

  fr::save_checkpoint(out_path, out.checkpoint);

  if (!metrics_path.empty()) {
    std::ofstream mout(metrics_path);
    if (!mout) throw fr::data_error("cannot open '" + metrics_path + "' for writing");
    for (const auto& em : out.metrics) {
      mout << ordered_json{{"epoch", em.epoch},
                           {"mean_loss", em.mean_loss},
                           {"examples", em.examples},
                           {"duration_ms", em.duration_ms}}
                  .dump()
           << "\n";
    }
  }

  std::printf("trained %zu epochs on %lld examples (%lld users had no negative pool)\n",
              out.metrics.size(), static_cast<long long>(out.example_count),
              static_cast<long long>(out.users_without_negatives));
  std::printf("time split at %lld\n", static_cast<long long>(out.t_split));
  std::printf("final epoch loss %.6f\n", out.metrics.back().mean_loss);
  std::printf("checkpoint: %s\n", out_path.c_str());

  ordered_json epochs = ordered_json::array();
  for (const auto& em : out.metrics)
    epochs.push_back(ordered_json{{"epoch", em.epoch},
                                  {"mean_loss", em.mean_loss},
                                  {"examples", em.examples},
                                  {"duration_ms", em.duration_ms}});
  emit_json(json_path, ordered_json{{"checkpoint", out_path},
                                    {"examples", out.example_count},
                                    {"users_without_negatives", out.users_without_negatives},
                                    {"t_split", out.t_split},
                                    {"final_loss", out.metrics.back().mean_loss},
                                    {"epochs", epochs}});
  return 0;
}

// ---- eval --------------------------------------------------------------------

int cmd_eval(const CommonOpts& common, const std::string& log_path, const std::string& ckpt_path,
             bool with_world, const std::string& json_path) {
  const fr::Checkpoint ckpt = fr::load_checkpoint(ckpt_path);
  const fr::Model model = fr::model_from_checkpoint(ckpt);
  const fr::Config cfg = assemble_config(common, &ckpt.config_text);

  const fr::Dataset ds = fr::ingest_log(log_path, cfg.train().min_support);
  require_log_fits(model, ds);
  const std::int64_t t_split = fr::split_timestamp(ds, cfg.train().split_frac);

  std::optional<fr::LatentWorld> world;
  if (with_world) world.emplace(fr::generate_world(cfg.world(), cfg.model().categories));

  std::cerr << "evaluating tail after t=" << t_split << "\n";
  const fr::EvalReport rep = fr::evaluate_model(model, ds, t_split, cfg.eval(), cfg.fusion(),
                                                world ? &*world : nullptr);

  auto show = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string("n/a");
  };
  std::printf("examples %lld (%lld positives), split t=%lld\n",
              static_cast<long long>(rep.examples), static_cast<long long>(rep.positives),
              static_cast<long long>(t_split));
  std::printf("auc: effective %s, finished-style %s, glance %s\n", show(rep.auc[0]).c_str(),
              show(rep.auc[1]).c_str(), show(rep.auc[2]).c_str());
  if (rep.skip_rate_at_k)
    std::printf("simulated skip rate @%lld: %.4f (over %lld users)\n",
                static_cast<long long>(rep.topk), *rep.skip_rate_at_k,
                static_cast<long long>(rep.skip_users));
  if (rep.recall_at_k)
    std::printf("finished-view recall @%lld: %.4f (over %lld users)\n",
                static_cast<long long>(rep.topk), *rep.recall_at_k,
                static_cast<long long>(rep.recall_users));

  emit_json(json_path,
            ordered_json{{"examples", rep.examples},
                         {"positives", rep.positives},
                         {"t_split", t_split},
                         {"auc", ordered_json{{"evv", opt_json(rep.auc[0])},
                                              {"fvv", opt_json(rep.auc[1])},
                                              {"gvv", opt_json(rep.auc[2])}}},
                         {"topk", rep.topk},
                         {"skip_rate_at_k", opt_json(rep.skip_rate_at_k)},
                         {"skip_users", rep.skip_users},
                         {"recall_at_k", opt_json(rep.recall_at_k)},
                         {"recall_users", rep.recall_users}});
  return 0;
}

// ---- rank --------------------------------------------------------------------

int cmd_rank(const CommonOpts& common, const std::string& ckpt_path, const std::string& log_path,
             std::int64_t user, const std::string& items_csv, std::int64_t pool,
             std::int64_t platform, const std::string& json_path) {
  const fr::Checkpoint ckpt = fr::load_checkpoint(ckpt_path);
  const fr::Model model = fr::model_from_checkpoint(ckpt);
  const fr::Config cfg = assemble_config(common, &ckpt.config_text);

  std::vector<fr::HistoryItem> history;
  if (!log_path.empty()) {
    const fr::Dataset ds = fr::ingest_log(log_path, cfg.train().min_support);
    require_log_fits(model, ds);
    auto it = ds.user_records.find(user);
    if (it != ds.user_records.end()) {
      history = fr::to_history(it->second, ds.stats);
      const std::size_t L = static_cast<std::size_t>(model.settings().seq_len);
      if (history.size() > L)
        history.erase(history.begin(), history.end() - static_cast<std::ptrdiff_t>(L));
      if (platform < 0) platform = it->second.back().platform_id;
    }
  }
  if (platform < 0) platform = 0;

  std::vector<std::int64_t> candidates;
  if (!items_csv.empty()) {
    candidates = parse_id_list(items_csv);
  } else {
    if (pool <= 0) throw fr::usage_error("rank: pass --items id,id,... or --pool N");
    fr::Rng rng(fr::mix_seed(cfg.eval().seed, static_cast<std::uint64_t>(user)));
    candidates.reserve(static_cast<std::size_t>(pool));
    for (std::int64_t i = 0; i < pool; ++i)
      candidates.push_back(static_cast<std::int64_t>(
          fr::uniform_below(rng, static_cast<std::uint64_t>(model.cardinality().items))));
  }

  const fr::RankedList rl = fr::rank_candidates(model, fr::ContextIds{user, 0, platform},
                                                history, candidates, cfg.fusion());

  std::printf("user %lld on platform %lld, history %zu, %zu candidates\n",
              static_cast<long long>(user), static_cast<long long>(platform), history.size(),
              candidates.size());
  std::printf("%5s %10s %12s %10s %10s %10s\n", "rank", "item", "score", "effective",
              "finished", "glance");
  for (std::size_t i = 0; i < rl.items.size(); ++i) {
    const auto& it = rl.items[i];
    std::printf("%5zu %10lld %12.6f %10.6f %10.6f %10.6f\n", i + 1,
                static_cast<long long>(it.item_id), it.score, it.y[0], it.y[1], it.y[2]);
  }
  if (rl.deduplicated || rl.skipped_unknown)
    std::printf("dropped %lld duplicate and %lld unknown candidate ids\n",
                static_cast<long long>(rl.deduplicated),
                static_cast<long long>(rl.skipped_unknown));

  ordered_json items = ordered_json::array();
  for (std::size_t i = 0; i < rl.items.size(); ++i) {
    const auto& it = rl.items[i];
    items.push_back(ordered_json{{"rank", i + 1},
                                 {"item", it.item_id},
                                 {"score", it.score},
                                 {"y_evv", it.y[0]},
                                 {"y_fvv", it.y[1]},
                                 {"y_gvv", it.y[2]}});
  }
  emit_json(json_path, ordered_json{{"user", user},
                                    {"platform", platform},
                                    {"history_length", history.size()},
                                    {"items", items},
                                    {"deduplicated", rl.deduplicated},
                                    {"skipped_unknown", rl.skipped_unknown}});
  return 0;
}

// ---- abtest --------------------------------------------------------------------

int cmd_abtest(const CommonOpts& common, const std::string& ckpt_a_path,
               const std::string& ckpt_b_path, const std::string& log_path,
               const std::string& json_path) {
  const fr::Checkpoint ckpt_a = fr::load_checkpoint(ckpt_a_path);
  const fr::Checkpoint ckpt_b = fr::load_checkpoint(ckpt_b_path);
  const fr::Model model_a = fr::model_from_checkpoint(ckpt_a);
  const fr::Model model_b = fr::model_from_checkpoint(ckpt_b);
  const fr::Config cfg = assemble_config(common, &ckpt_a.config_text);

  const fr::WorldSettings ws = cfg.world();
  const fr::LatentWorld world = fr::generate_world(ws, cfg.model().categories);
  for (const fr::Model* m : {&model_a, &model_b}) {
    const auto& card = m->cardinality();
    if (ws.users > card.users || ws.items > card.items || ws.platforms > card.platforms)
      throw fr::data_error("world is larger than a model's tables (world " +
                           std::to_string(ws.users) + "/" + std::to_string(ws.items) + "/" +
                           std::to_string(ws.platforms) + " vs tables " +
                           std::to_string(card.users) + "/" + std::to_string(card.items) + "/" +
                           std::to_string(card.platforms) +
                           "); set [world] to match the checkpoints' training world");
  }

  fr::Dataset warm;
  if (!log_path.empty()) {
    std::cerr << "warm starting from " << log_path << "\n";
    warm = fr::ingest_log(log_path, cfg.train().min_support);
    require_log_fits(model_a, warm);
    require_log_fits(model_b, warm);
  } else {
    std::cerr << "warm starting from regenerated organic traffic\n";
    warm = fr::build_dataset(
        fr::generate_log(world, ws.sessions_per_user, ws.session_len, ws.seed),
        cfg.train().min_support);
  }

  const fr::AbtestSettings ab = cfg.abtest();
  std::cerr << "serving " << ab.sessions_per_user << " sessions x " << ab.session_len
            << " items per user (" << (ab.paired ? "paired" : "split") << " mode)\n";
  const fr::ABReport rep =
      fr::run_abtest(world, model_a, model_b, &warm, warm.stats, ab, cfg.fusion());

  std::printf("arm A: %lld users, %lld exposures | arm B: %lld users, %lld exposures\n",
              static_cast<long long>(rep.arm_a.users),
              static_cast<long long>(rep.arm_a.exposures),
              static_cast<long long>(rep.arm_b.users),
              static_cast<long long>(rep.arm_b.exposures));
  std::printf("%-18s %16s %16s %22s\n", "Metric", "arm A", "arm B", "Improvements rate(%)");
  for (const auto& row : rep.rows) {
    char imp[32];
    if (row.improvement_pct)
      std::snprintf(imp, sizeof(imp), "%+.3f", *row.improvement_pct);
    else
      std::snprintf(imp, sizeof(imp), "n/a");
    std::printf("%-18s %16.4f %16.4f %22s%s\n", row.name.c_str(), row.a, row.b, imp,
                row.lower_better ? "  (lower is better)" : "");
  }
  std::printf("\ndiversity: mean entropy over 100-exposure windows (nats)\n");
  std::printf("  item ids:   A %.4f (%lld windows)   B %.4f (%lld windows)\n",
              rep.id_entropy_a.mean, static_cast<long long>(rep.id_entropy_a.windows),
              rep.id_entropy_b.mean, static_cast<long long>(rep.id_entropy_b.windows));
  std::printf("  categories: A %.4f (%lld windows)   B %.4f (%lld windows)\n",
              rep.cat_entropy_a.mean, static_cast<long long>(rep.cat_entropy_a.windows),
              rep.cat_entropy_b.mean, static_cast<long long>(rep.cat_entropy_b.windows));
  std::printf("category entropy by personal skip-rate quartile (Q1 = least skips)\n");
  for (const auto& q : rep.quartiles)
    std::printf("  Q%lld: A %.4f (%lld windows)   B %.4f (%lld windows)\n",
                static_cast<long long>(q.quartile), q.a_cat_entropy,
                static_cast<long long>(q.a_windows), q.b_cat_entropy,
                static_cast<long long>(q.b_windows));

  ordered_json rows = ordered_json::array();
  for (const auto& row : rep.rows)
    rows.push_back(ordered_json{{"metric", row.name},
                                {"a", row.a},
                                {"b", row.b},
                                {"lower_better", row.lower_better},
                                {"improvement_pct", opt_json(row.improvement_pct)}});
  ordered_json quartiles = ordered_json::array();
  for (const auto& q : rep.quartiles)
    quartiles.push_back(ordered_json{{"quartile", q.quartile},
                                     {"a_cat_entropy", q.a_cat_entropy},
                                     {"a_windows", q.a_windows},
                                     {"b_cat_entropy", q.b_cat_entropy},
                                     {"b_windows", q.b_windows}});
  emit_json(json_path,
            ordered_json{
                {"arm_a", ordered_json{{"users", rep.arm_a.users},
                                       {"exposures", rep.arm_a.exposures},
                                       {"gvv_rate", rep.arm_a.gvv_rate()}}},
                {"arm_b", ordered_json{{"users", rep.arm_b.users},
                                       {"exposures", rep.arm_b.exposures},
                                       {"gvv_rate", rep.arm_b.gvv_rate()}}},
                {"rows", rows},
                {"id_entropy",
                 ordered_json{{"a", rep.id_entropy_a.mean},
                              {"a_windows", rep.id_entropy_a.windows},
                              {"b", rep.id_entropy_b.mean},
                              {"b_windows", rep.id_entropy_b.windows}}},
                {"cat_entropy",
                 ordered_json{{"a", rep.cat_entropy_a.mean},
                              {"a_windows", rep.cat_entropy_a.windows},
                              {"b", rep.cat_entropy_b.mean},
                              {"b_windows", rep.cat_entropy_b.windows}}},
                {"quartiles", quartiles}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feedrank: implicit-feedback short-video ranking"};
  app.require_subcommand(1);

  CommonOpts sim_common;
  std::string sim_out, sim_json;
  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic watch log");
  add_common(sim, sim_common);
  sim->add_option("--out", sim_out, "output log path")->required();
  sim->add_option("--json", sim_json, "write the summary as JSON to this path ('-' = stdout)");

  CommonOpts train_common;
  std::string train_log, train_out, train_metrics, train_json;
  CLI::App* train = app.add_subcommand("train", "fit a model on a log, write a checkpoint");
  add_common(train, train_common);
  train->add_option("--log", train_log, "input watch log")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "output checkpoint path")->required();
  train->add_option("--metrics", train_metrics, "write per-epoch metrics as JSON lines");
  train->add_option("--json", train_json, "write the summary as JSON ('-' = stdout)");

  CommonOpts eval_common;
  std::string eval_log, eval_ckpt, eval_json;
  bool eval_world = false;
  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a log's held-out tail");
  add_common(evalc, eval_common);
  evalc->add_option("--log", eval_log, "input watch log")->required()->check(CLI::ExistingFile);
  evalc->add_option("--ckpt", eval_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  evalc->add_flag("--world", eval_world,
                  "regenerate the synthetic world for simulated top-k probes");
  evalc->add_option("--json", eval_json, "write the report as JSON ('-' = stdout)");

  CommonOpts rank_common;
  std::string rank_ckpt, rank_log, rank_items, rank_json;
  std::int64_t rank_user = 0, rank_pool = 0, rank_platform = -1;
  CLI::App* rank = app.add_subcommand("rank", "rank candidate items for one user");
  add_common(rank, rank_common);
  rank->add_option("--ckpt", rank_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  rank->add_option("--log", rank_log, "watch log supplying the user's history")
      ->check(CLI::ExistingFile);
  rank->add_option("--user", rank_user, "user id")->required();
  auto* items_opt = rank->add_option("--items", rank_items, "comma-separated candidate item ids");
  auto* pool_opt =
      rank->add_option("--pool", rank_pool, "rank a uniformly sampled candidate pool of this size");
  items_opt->excludes(pool_opt);
  rank->add_option("--platform", rank_platform,
                   "platform id (default: the user's most recent, else 0)");
  rank->add_option("--json", rank_json, "write the ranking as JSON ('-' = stdout)");

  CommonOpts ab_common;
  std::string ab_a, ab_b, ab_log, ab_json;
  CLI::App* ab = app.add_subcommand("abtest", "simulated A/B test between two checkpoints");
  add_common(ab, ab_common);
  ab->add_option("--ckpt-a", ab_a, "treatment checkpoint")->required()->check(CLI::ExistingFile);
  ab->add_option("--ckpt-b", ab_b, "control checkpoint")->required()->check(CLI::ExistingFile);
  ab->add_option("--log", ab_log, "warm-start log (default: regenerated organic traffic)")
      ->check(CLI::ExistingFile);
  ab->add_option("--json", ab_json, "write the report as JSON ('-' = stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_common, sim_out, sim_json);
    if (train->parsed())
      return cmd_train(train_common, train_log, train_out, train_metrics, train_json);
    if (evalc->parsed()) return cmd_eval(eval_common, eval_log, eval_ckpt, eval_world, eval_json);
    if (rank->parsed())
      return cmd_rank(rank_common, rank_ckpt, rank_log, rank_user, rank_items, rank_pool,
                      rank_platform, rank_json);
    if (ab->parsed()) return cmd_abtest(ab_common, ab_a, ab_b, ab_log, ab_json);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const fr::usage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fr::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fr::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const fr::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fr::index_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fr::dimension_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
