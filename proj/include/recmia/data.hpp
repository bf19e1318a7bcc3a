#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "recmia/common.hpp"

namespace recmia {

struct RawInteraction {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::int64_t timestamp = 0;

  bool operator==(const RawInteraction&) const = default;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Implicit-feedback interaction data with dense indices. Subsets produced by
// partitioning keep the parent's item space, so num_items() may exceed the
// number of items that actually occur in histories.
struct InteractionDataset {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<std::vector<ItemIndex>> histories;

  std::size_t num_users() const { return histories.size(); }
  std::size_t num_items() const { return item_ids.size(); }
  std::size_t num_interactions() const {
    std::size_t n = 0;
    for (const auto& h : histories) n += h.size();
    return n;
  }
  bool empty() const { return histories.empty(); }

  std::optional<UserIndex> find_user(const std::string& id) const {
    ensure_index();
    auto it = user_lookup_.find(id);
    if (it == user_lookup_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<ItemIndex> find_item(const std::string& id) const {
    ensure_index();
    auto it = item_lookup_.find(id);
    if (it == item_lookup_.end()) return std::nullopt;
    return it->second;
  }

  // Number of users interacting with each item.
  std::vector<std::size_t> item_counts() const {
    std::vector<std::size_t> counts(num_items(), 0);
    for (const auto& h : histories)
      for (ItemIndex i : h) ++counts[i];
    return counts;
  }

  bool operator==(const InteractionDataset& o) const {
    return user_ids == o.user_ids && item_ids == o.item_ids && histories == o.histories;
  }

  // Call after mutating user_ids/item_ids directly.
  void invalidate_index() const { indexed_ = false; }

 private:
  void ensure_index() const {
    if (indexed_ && user_lookup_.size() == user_ids.size() &&
        item_lookup_.size() == item_ids.size())
      return;
    user_lookup_.clear();
    item_lookup_.clear();
    for (std::size_t u = 0; u < user_ids.size(); ++u)
      user_lookup_.emplace(user_ids[u], static_cast<UserIndex>(u));
    for (std::size_t i = 0; i < item_ids.size(); ++i)
      item_lookup_.emplace(item_ids[i], static_cast<ItemIndex>(i));
    indexed_ = true;
  }

  mutable bool indexed_ = false;
  mutable std::unordered_map<std::string, UserIndex> user_lookup_;
  mutable std::unordered_map<std::string, ItemIndex> item_lookup_;
};

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

// Reads `UserID::MovieID::Rating::Timestamp` lines. `delimiter` = "\t" reads
// the MovieLens-100K u.data layout with the same four fields. Any malformed
// line aborts the read.
inline std::vector<RawInteraction> parse_movielens(std::istream& in,
                                                   std::string_view delimiter = "::") {
  std::vector<RawInteraction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    const auto fields = detail::split(view, delimiter);
    if (fields.size() != 4)
      throw ParseError(line_no, "expected 4 fields, found " + std::to_string(fields.size()));
    const auto user = detail::trim(fields[0]);
    const auto item = detail::trim(fields[1]);
    if (user.empty() || item.empty()) throw ParseError(line_no, "empty user or item id");
    const auto rating = detail::parse_real(fields[2]);
    if (!rating) throw ParseError(line_no, "unparsable rating '" + std::string(fields[2]) + "'");
    const auto ts = detail::parse_int(fields[3]);
    if (!ts) throw ParseError(line_no, "unparsable timestamp '" + std::string(fields[3]) + "'");
    out.push_back({std::string(user), std::string(item), *rating, *ts});
  }
  return out;
}

inline std::vector<RawInteraction> parse_movielens(const std::string& path,
                                                   std::string_view delimiter = "::") {
  auto in = detail::open_input(path);
  return parse_movielens(in, delimiter);
}

// Role -> column-name mapping for header-bearing CSV files. An empty
// timestamp column means "not present".
struct CsvColumns {
  std::string user = "user";
  std::string item = "item";
  std::string rating = "rating";
  std::string timestamp;
  char delimiter = ',';
};

inline std::vector<RawInteraction> parse_csv(std::istream& in, const CsvColumns& cols) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing header row");
  const std::string sep(1, cols.delimiter);
  const auto header = detail::split(detail::trim(line), sep);
  auto column_of = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (detail::trim(header[i]) == name) return i;
    throw ParseError(1, "missing column '" + name + "'");
  };
  const std::size_t user_col = column_of(cols.user);
  const std::size_t item_col = column_of(cols.item);
  const std::size_t rating_col = column_of(cols.rating);
  const bool has_ts = !cols.timestamp.empty();
  const std::size_t ts_col = has_ts ? column_of(cols.timestamp) : 0;

  std::vector<RawInteraction> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    const auto fields = detail::split(view, sep);
    auto field = [&](std::size_t col) {
      if (col >= fields.size())
        throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                      std::to_string(fields.size()));
      return detail::trim(fields[col]);
    };
    RawInteraction r;
    r.user_id = std::string(field(user_col));
    r.item_id = std::string(field(item_col));
    if (r.user_id.empty() || r.item_id.empty()) throw ParseError(line_no, "empty user or item id");
    const auto rating = detail::parse_real(field(rating_col));
    if (!rating)
      throw ParseError(line_no, "unparsable rating '" + std::string(field(rating_col)) + "'");
    r.rating = *rating;
    if (has_ts) {
      const auto ts = detail::parse_int(field(ts_col));
      if (!ts) throw ParseError(line_no, "unparsable timestamp");
      r.timestamp = *ts;
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<RawInteraction> parse_csv(const std::string& path, const CsvColumns& cols) {
  auto in = detail::open_input(path);
  return parse_csv(in, cols);
}

inline constexpr std::size_t kDefaultMinInteractions = 5;

// Collapses duplicates, drops users and items with fewer than
// `min_interactions` records until nothing changes, and densifies ids in
// first-appearance order. Ratings are discarded.
inline InteractionDataset build_dataset(const std::vector<RawInteraction>& raw,
                                        std::size_t min_interactions = kDefaultMinInteractions) {
  if (min_interactions < 1) throw ConfigError("min_interactions must be >= 1");

  std::unordered_map<std::string, std::uint32_t> user_intern;
  std::unordered_map<std::string, std::uint32_t> item_intern;
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;
  auto intern = [](auto& map, auto& names, const std::string& id) {
    auto [it, inserted] = map.emplace(id, static_cast<std::uint32_t>(names.size()));
    if (inserted) names.push_back(id);
    return it->second;
  };

  struct Entry {
    std::uint32_t item;
    std::int64_t ts;
    std::size_t order;
  };
  std::vector<std::vector<Entry>> per_user;
  std::vector<std::unordered_map<std::uint32_t, std::size_t>> slot;  // item -> position in per_user[u]

  for (std::size_t k = 0; k < raw.size(); ++k) {
    const auto& r = raw[k];
    const std::uint32_t u = intern(user_intern, user_names, r.user_id);
    const std::uint32_t i = intern(item_intern, item_names, r.item_id);
    if (u == per_user.size()) {
      per_user.emplace_back();
      slot.emplace_back();
    }
    auto [it, inserted] = slot[u].emplace(i, per_user[u].size());
    if (inserted) {
      per_user[u].push_back({i, r.timestamp, k});
    } else if (r.timestamp < per_user[u][it->second].ts) {
      per_user[u][it->second].ts = r.timestamp;
      per_user[u][it->second].order = k;
    }
  }
  slot.clear();

  for (auto& entries : per_user) {
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.ts != b.ts) return a.ts < b.ts;
      return a.order < b.order;
    });
  }

  std::vector<bool> user_alive(per_user.size(), true);
  std::vector<bool> item_alive(item_names.size(), true);
  std::vector<std::size_t> user_degree(per_user.size());
  std::vector<std::size_t> item_degree(item_names.size(), 0);
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    user_degree[u] = per_user[u].size();
    for (const auto& e : per_user[u]) ++item_degree[e.item];
  }

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < item_alive.size(); ++i) {
      if (item_alive[i] && item_degree[i] < min_interactions) {
        item_alive[i] = false;
        changed = true;
      }
    }
    for (std::size_t u = 0; u < per_user.size(); ++u) {
      if (!user_alive[u]) continue;
      std::size_t degree = 0;
      for (const auto& e : per_user[u]) degree += item_alive[e.item] ? 1 : 0;
      user_degree[u] = degree;
      if (degree < min_interactions) {
        user_alive[u] = false;
        changed = true;
        for (const auto& e : per_user[u])
          if (item_alive[e.item]) --item_degree[e.item];
      }
    }
    if (changed) {
      std::fill(item_degree.begin(), item_degree.end(), 0);
      for (std::size_t u = 0; u < per_user.size(); ++u) {
        if (!user_alive[u]) continue;
        for (const auto& e : per_user[u])
          if (item_alive[e.item]) ++item_degree[e.item];
      }
    }
  }

  // Items are densified in order of their first raw appearance among kept rows.
  std::vector<std::uint32_t> item_dense(item_names.size(), UINT32_MAX);
  InteractionDataset ds;
  for (const auto& r : raw) {
    const std::uint32_t u = user_intern.at(r.user_id);
    const std::uint32_t i = item_intern.at(r.item_id);
    if (user_alive[u] && item_alive[i] && item_dense[i] == UINT32_MAX) {
      item_dense[i] = static_cast<std::uint32_t>(ds.item_ids.size());
      ds.item_ids.push_back(item_names[i]);
    }
  }
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    if (!user_alive[u]) continue;
    std::vector<ItemIndex> history;
    history.reserve(user_degree[u]);
    for (const auto& e : per_user[u])
      if (item_alive[e.item]) history.push_back(item_dense[e.item]);
    ds.user_ids.push_back(user_names[u]);
    ds.histories.push_back(std::move(history));
  }
  if (ds.histories.empty() || ds.item_ids.empty())
    throw Error("dataset empty after filtering with min_interactions=" +
                std::to_string(min_interactions));
  return ds;
}

// Builds a dataset straight from dense item lists; ids are the decimal indices.
inline InteractionDataset make_dataset(std::size_t num_items,
                                       std::vector<std::vector<ItemIndex>> histories) {
  InteractionDataset ds;
  for (std::size_t i = 0; i < num_items; ++i) ds.item_ids.push_back(std::to_string(i));
  for (std::size_t u = 0; u < histories.size(); ++u) {
    for (ItemIndex i : histories[u])
      if (i >= num_items) throw Error("item index out of range in make_dataset");
    ds.user_ids.push_back("u" + std::to_string(u));
  }
  ds.histories = std::move(histories);
  return ds;
}

// Re-expresses `other` in `parent`'s item index space by opaque item id.
// Items unknown to the parent are dropped, then users left with no items.
inline InteractionDataset align_items(const InteractionDataset& other,
                                      const InteractionDataset& parent) {
  InteractionDataset out;
  out.item_ids = parent.item_ids;
  std::vector<std::optional<ItemIndex>> remap(other.num_items());
  for (std::size_t i = 0; i < other.num_items(); ++i) remap[i] = parent.find_item(other.item_ids[i]);
  for (std::size_t u = 0; u < other.num_users(); ++u) {
    std::vector<ItemIndex> h;
    for (ItemIndex i : other.histories[u])
      if (remap[i]) h.push_back(*remap[i]);
    if (h.empty()) continue;
    out.user_ids.push_back(other.user_ids[u]);
    out.histories.push_back(std::move(h));
  }
  return out;
}

inline std::uint64_t dataset_fingerprint(const InteractionDataset& ds) {
  Fingerprint fp;
  fp.add(static_cast<std::uint64_t>(ds.num_items()));
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    fp.add(ds.user_ids[u]).add(static_cast<std::uint64_t>(ds.histories[u].size()));
    for (ItemIndex i : ds.histories[u]) fp.add(i);
  }
  return fp.value();
}

inline nlohmann::json dataset_to_json(const InteractionDataset& ds) {
  nlohmann::json users = nlohmann::json::array();
  for (std::size_t u = 0; u < ds.num_users(); ++u)
    users.push_back({{"id", ds.user_ids[u]}, {"items", ds.histories[u]}});
  return {{"format", "recmia-dataset"}, {"version", 1}, {"item_ids", ds.item_ids}, {"users", users}};
}

inline InteractionDataset dataset_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "recmia-dataset") throw Error("not a recmia dataset document");
  if (j.value("version", 0) != 1)
    throw Error("unsupported dataset version " + std::to_string(j.value("version", 0)));
  InteractionDataset ds;
  ds.item_ids = j.at("item_ids").get<std::vector<std::string>>();
  for (const auto& u : j.at("users")) {
    ds.user_ids.push_back(u.at("id").get<std::string>());
    auto items = u.at("items").get<std::vector<ItemIndex>>();
    for (ItemIndex i : items)
      if (i >= ds.num_items()) throw Error("dataset item index out of range");
    ds.histories.push_back(std::move(items));
  }
  return ds;
}

inline void save_dataset(const InteractionDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << dataset_to_json(ds).dump() << '\n';
}

inline InteractionDataset load_dataset(const std::string& path) {
  auto in = detail::open_input(path);
  return dataset_from_json(nlohmann::json::parse(in));
}

}  // namespace recmia
