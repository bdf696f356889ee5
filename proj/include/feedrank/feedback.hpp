#pragma once

// Implicit-feedback classification over raw watch logs.
//
// Three binary signals per interaction, each judged against how *other*
// viewers watched the same video:
//   evv  - effective view:  watch time above the video's median watch time
//   fvv  - finished-style view: watch time above the video's 60th percentile
//   gvv  - glance-and-skip: watch time under a fixed 3-second floor
//
// fvv implies evv because the 60th percentile can never lie below the median.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "feedrank/errors.hpp"

namespace feedrank {

inline constexpr std::int64_t kGlanceThresholdMs = 3000;  // gvv cutoff
inline constexpr std::string_view kLogHeader = "#user\titem\tts\twatch\tplatform";

struct InteractionRecord {
  std::int64_t user_id = 0;
  std::int64_t item_id = 0;
  std::int64_t timestamp_ms = 0;
  std::int64_t watch_time_ms = 0;
  std::int64_t platform_id = 0;
};

struct FeedbackFlags {
  bool evv = false;
  bool fvv = false;
  bool gvv = false;

  bool operator==(const FeedbackFlags&) const = default;
};

struct VideoWatchStats {
  double p50_ms = std::numeric_limits<double>::infinity();
  double p60_ms = std::numeric_limits<double>::infinity();
  std::int64_t count = 0;
};

// Nearest-rank percentile: the ceil(pct * n)-th smallest value (1-indexed).
// `sorted` must be ascending and non-empty.
inline double nearest_rank_percentile(const std::vector<double>& sorted, double pct) {
  if (sorted.empty()) throw usage_error("nearest_rank_percentile: empty sample");
  if (!(pct > 0.0 && pct <= 1.0)) throw usage_error("nearest_rank_percentile: pct out of (0,1]");
  const double n = static_cast<double>(sorted.size());
  std::size_t rank = static_cast<std::size_t>(std::ceil(pct * n));
  if (rank < 1) rank = 1;
  if (rank > sorted.size()) rank = sorted.size();
  return sorted[rank - 1];
}

// Per-item watch-time percentiles with a global fallback for thin items.
class WatchStatsIndex {
 public:
  WatchStatsIndex() = default;

  WatchStatsIndex(std::unordered_map<std::int64_t, VideoWatchStats> per_item,
                  VideoWatchStats global, std::int64_t min_support)
      : per_item_(std::move(per_item)), global_(global), min_support_(min_support) {}

  // Stats used to judge an interaction with this item: the item's own
  // percentiles when it has at least min_support watches, otherwise global.
  const VideoWatchStats& for_item(std::int64_t item_id) const {
    auto it = per_item_.find(item_id);
    if (it == per_item_.end() || it->second.count < min_support_) return global_;
    return it->second;
  }

  const VideoWatchStats& global() const { return global_; }
  std::int64_t min_support() const { return min_support_; }
  std::size_t items_tracked() const { return per_item_.size(); }

 private:
  std::unordered_map<std::int64_t, VideoWatchStats> per_item_;
  VideoWatchStats global_;  // pooled over every watch in the log
  std::int64_t min_support_ = 5;
};

inline WatchStatsIndex compute_watch_stats(const std::vector<InteractionRecord>& records,
                                           std::int64_t min_support = 5) {
  if (min_support < 1) throw usage_error("compute_watch_stats: min_support must be >= 1");
  std::unordered_map<std::int64_t, std::vector<double>> watches;
  std::vector<double> pooled;
  pooled.reserve(records.size());
  for (const auto& r : records) {
    if (r.watch_time_ms < 0)
      throw data_error("compute_watch_stats: negative watch time for item " +
                       std::to_string(r.item_id));
    watches[r.item_id].push_back(static_cast<double>(r.watch_time_ms));
    pooled.push_back(static_cast<double>(r.watch_time_ms));
  }
  VideoWatchStats global;
  if (!pooled.empty()) {
    std::sort(pooled.begin(), pooled.end());
    global.p50_ms = nearest_rank_percentile(pooled, 0.50);
    global.p60_ms = nearest_rank_percentile(pooled, 0.60);
    global.count = static_cast<std::int64_t>(pooled.size());
  }
  std::unordered_map<std::int64_t, VideoWatchStats> per_item;
  per_item.reserve(watches.size());
  for (auto& [item, w] : watches) {
    std::sort(w.begin(), w.end());
    VideoWatchStats s;
    s.count = static_cast<std::int64_t>(w.size());
    if (s.count >= min_support) {
      s.p50_ms = nearest_rank_percentile(w, 0.50);
      s.p60_ms = nearest_rank_percentile(w, 0.60);
    } else {
      s.p50_ms = global.p50_ms;  // thin item: borrow pooled percentiles
      s.p60_ms = global.p60_ms;
    }
    per_item.emplace(item, s);
  }
  return WatchStatsIndex(std::move(per_item), global, min_support);
}

inline FeedbackFlags classify_feedback(const InteractionRecord& rec, const VideoWatchStats& s) {
  if (rec.watch_time_ms < 0)
    throw data_error("classify_feedback: negative watch time " +
                     std::to_string(rec.watch_time_ms));
  FeedbackFlags f;
  const double w = static_cast<double>(rec.watch_time_ms);
  f.evv = w > s.p50_ms;
  f.fvv = w > s.p60_ms;
  f.gvv = rec.watch_time_ms < kGlanceThresholdMs;
  return f;
}

// Full log with per-user chronological views and precomputed watch stats.
struct Dataset {
  // user id -> that user's records sorted by (timestamp, item id);
  // std::map keeps user iteration order deterministic.
  std::map<std::int64_t, std::vector<InteractionRecord>> user_records;
  WatchStatsIndex stats;
  std::int64_t num_users = 0;      // max id + 1
  std::int64_t num_items = 0;
  std::int64_t num_platforms = 0;
  std::size_t record_count = 0;

  std::vector<InteractionRecord> all_records() const {
    std::vector<InteractionRecord> out;
    out.reserve(record_count);
    for (const auto& [u, recs] : user_records) out.insert(out.end(), recs.begin(), recs.end());
    return out;
  }
};

namespace detail {

inline std::int64_t parse_log_int(std::string_view field, std::size_t line_no, const char* what) {
  std::int64_t v = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw data_error("log line " + std::to_string(line_no) + ": field '" + what +
                     "' is not an integer: '" + std::string(field) + "'");
  return v;
}

}  // namespace detail

// Builds a Dataset from parsed records: dedups exact (user, item, timestamp)
// repeats keeping the longest watch, sorts each user's view chronologically,
// and computes watch stats over the deduped log.
inline Dataset build_dataset(std::vector<InteractionRecord> records, std::int64_t min_support = 5) {
  Dataset ds;
  std::map<std::int64_t, std::vector<InteractionRecord>> by_user;
  for (const auto& r : records) {
    if (r.user_id < 0 || r.item_id < 0 || r.platform_id < 0)
      throw data_error("build_dataset: negative id in record (user " + std::to_string(r.user_id) +
                       ", item " + std::to_string(r.item_id) + ")");
    if (r.watch_time_ms < 0)
      throw data_error("build_dataset: negative watch time for user " +
                       std::to_string(r.user_id) + ", item " + std::to_string(r.item_id));
    by_user[r.user_id].push_back(r);
    ds.num_users = std::max(ds.num_users, r.user_id + 1);
    ds.num_items = std::max(ds.num_items, r.item_id + 1);
    ds.num_platforms = std::max(ds.num_platforms, r.platform_id + 1);
  }
  for (auto& [user, recs] : by_user) {
    std::sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) {
      if (a.timestamp_ms != b.timestamp_ms) return a.timestamp_ms < b.timestamp_ms;
      if (a.item_id != b.item_id) return a.item_id < b.item_id;
      return a.watch_time_ms > b.watch_time_ms;  // duplicate key: longest first
    });
    std::vector<InteractionRecord> dedup;
    dedup.reserve(recs.size());
    for (const auto& r : recs) {
      if (!dedup.empty() && dedup.back().timestamp_ms == r.timestamp_ms &&
          dedup.back().item_id == r.item_id) {
        continue;  // same (user, item, ts): keep the longest watch, seen first
      }
      dedup.push_back(r);
    }
    ds.record_count += dedup.size();
    ds.user_records.emplace(user, std::move(dedup));
  }
  ds.stats = compute_watch_stats(ds.all_records(), min_support);
  return ds;
}

// Reads a tab-separated watch log. First line must be the exact header
// `#user<TAB>item<TAB>ts<TAB>watch<TAB>platform`; every following non-empty
// line carries the five integer fields in that order.
inline Dataset ingest_log(const std::string& path, std::int64_t min_support = 5) {
  std::ifstream in(path);
  if (!in) throw data_error("ingest_log: cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw data_error("ingest_log: '" + path + "' is empty");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kLogHeader)
    throw data_error("ingest_log: schema mismatch on line 1: expected '" +
                     std::string(kLogHeader) + "', got '" + line + "'");
  std::vector<InteractionRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string_view, 5> fields;
    std::string_view rest = line;
    for (std::size_t i = 0; i < 5; ++i) {
      const std::size_t tab = rest.find('\t');
      if (i < 4) {
        if (tab == std::string_view::npos)
          throw data_error("log line " + std::to_string(line_no) + ": expected 5 fields");
        fields[i] = rest.substr(0, tab);
        rest = rest.substr(tab + 1);
      } else {
        if (tab != std::string_view::npos)
          throw data_error("log line " + std::to_string(line_no) + ": expected 5 fields");
        fields[i] = rest;
      }
    }
    InteractionRecord r;
    r.user_id = detail::parse_log_int(fields[0], line_no, "user");
    r.item_id = detail::parse_log_int(fields[1], line_no, "item");
    r.timestamp_ms = detail::parse_log_int(fields[2], line_no, "ts");
    r.watch_time_ms = detail::parse_log_int(fields[3], line_no, "watch");
    r.platform_id = detail::parse_log_int(fields[4], line_no, "platform");
    if (r.user_id < 0 || r.item_id < 0 || r.platform_id < 0)
      throw data_error("log line " + std::to_string(line_no) + ": negative id");
    if (r.watch_time_ms < 0)
      throw data_error("log line " + std::to_string(line_no) + ": negative watch time");
    records.push_back(r);
  }
  return build_dataset(std::move(records), min_support);
}

inline void write_log(const std::string& path, const std::vector<InteractionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw data_error("write_log: cannot open '" + path + "' for writing");
  out << kLogHeader << '\n';
  for (const auto& r : records)
    out << r.user_id << '\t' << r.item_id << '\t' << r.timestamp_ms << '\t' << r.watch_time_ms
        << '\t' << r.platform_id << '\n';
  if (!out) throw data_error("write_log: write failed for '" + path + "'");
}

// One step of a user's viewing history as consumed by the sequence encoder.
struct HistoryItem {
  std::int64_t item_id = 0;
  FeedbackFlags flags;
};

inline std::vector<HistoryItem> to_history(const std::vector<InteractionRecord>& records,
                                           const WatchStatsIndex& stats) {
  std::vector<HistoryItem> h;
  h.reserve(records.size());
  for (const auto& r : records)
    h.push_back(HistoryItem{r.item_id, classify_feedback(r, stats.for_item(r.item_id))});
  return h;
}

}  // namespace feedrank
