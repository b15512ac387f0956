// Copyright 2026 The svcanchor Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Machine-log ingestion: line grammar, service segmentation by request id,
// mapping of raw event types onto canonical operations and run-length
// service record vectors.

#ifndef SVCANCHOR_EVENT_LOG_HPP_
#define SVCANCHOR_EVENT_LOG_HPP_

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "svcanchor/common.hpp"

namespace svcanchor {

struct RawLogEntry {
  TimestampMs timestamp = 0;
  std::string request_id;
  std::string raw_event_type;
  std::vector<std::pair<std::string, std::string>> params;

  // First value for `key`, if any.
  std::optional<std::string> param(std::string_view key) const {
    for (const auto& [k, v] : params) {
      if (k == key) return v;
    }
    return std::nullopt;
  }

  bool operator==(const RawLogEntry&) const = default;
};

// Positional line grammar: `<epoch_ms> <request_id> <EVENT_TYPE> k=v ...` by
// default. Field positions and separators are configurable; every token after
// the three positional fields is a key/value parameter.
struct LogGrammar {
  char field_separator = ' ';
  char kv_separator = '=';
  int timestamp_field = 0;
  int request_field = 1;
  int event_field = 2;

  static LogGrammar from_json(const nlohmann::json& j) {
    LogGrammar g;
    auto single_char = [](const nlohmann::json& v, const char* name) {
      auto s = v.get<std::string>();
      if (s.size() != 1) {
        throw Error(ErrorKind::kValidation, std::string("grammar: ") + name +
                                                " must be a single character");
      }
      return s[0];
    };
    if (j.contains("field_separator")) g.field_separator = single_char(j["field_separator"], "field_separator");
    if (j.contains("kv_separator")) g.kv_separator = single_char(j["kv_separator"], "kv_separator");
    g.timestamp_field = j.value("timestamp_field", g.timestamp_field);
    g.request_field = j.value("request_field", g.request_field);
    g.event_field = j.value("event_field", g.event_field);
    std::set<int> fields{g.timestamp_field, g.request_field, g.event_field};
    if (fields != std::set<int>{0, 1, 2}) {
      throw Error(ErrorKind::kValidation,
                  "grammar: timestamp/request/event fields must be a permutation of 0,1,2");
    }
    return g;
  }
};

enum class DiagnosticKind { kMalformed, kOutOfOrder, kOrphan, kUnterminated, kDuplicateBegin, kEmptySession };

inline const char* to_string(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::kMalformed: return "malformed";
    case DiagnosticKind::kOutOfOrder: return "out_of_order";
    case DiagnosticKind::kOrphan: return "orphan";
    case DiagnosticKind::kUnterminated: return "unterminated";
    case DiagnosticKind::kDuplicateBegin: return "duplicate_begin";
    case DiagnosticKind::kEmptySession: return "empty_session";
  }
  return "unknown";
}

struct Diagnostic {
  std::size_t line = 0;  // 1-based source line; 0 when not line-bound
  DiagnosticKind kind = DiagnosticKind::kMalformed;
  std::string message;
};

// `line 12: malformed: non-numeric timestamp "abc"`
inline std::string format_diagnostics(const std::vector<Diagnostic>& diagnostics) {
  std::string out;
  for (const auto& d : diagnostics) {
    out += "line " + std::to_string(d.line) + ": " + to_string(d.kind) + ": " + d.message + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const std::vector<Diagnostic>& diagnostics) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : diagnostics) {
    arr.push_back({{"line", d.line}, {"kind", to_string(d.kind)}, {"message", d.message}});
  }
  return arr;
}

struct ParsedLog {
  std::vector<RawLogEntry> entries;
  std::vector<std::size_t> line_numbers;  // parallel to entries
  std::vector<Diagnostic> diagnostics;
};

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string_view::npos) next = s.size();
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

// Returns an error message, or nullopt on success.
inline std::optional<std::string> parse_line(std::string_view line, const LogGrammar& g,
                                             RawLogEntry& out) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.empty()) return "blank line";
  auto tokens = split(line, g.field_separator);
  if (tokens.size() < 3) return "expected at least 3 fields, found " + std::to_string(tokens.size());
  for (auto t : tokens) {
    if (t.empty()) return "empty field (repeated separator)";
  }
  std::string_view ts = tokens[g.timestamp_field];
  TimestampMs value = 0;
  auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), value);
  if (ec != std::errc() || ptr != ts.data() + ts.size() || value < 0) {
    return "invalid timestamp \"" + std::string(ts) + "\"";
  }
  out.timestamp = value;
  out.request_id = std::string(tokens[g.request_field]);
  out.raw_event_type = std::string(tokens[g.event_field]);
  out.params.clear();
  for (std::size_t i = 3; i < tokens.size(); ++i) {
    auto eq = tokens[i].find(g.kv_separator);
    if (eq == std::string_view::npos || eq == 0) {
      return "parameter \"" + std::string(tokens[i]) + "\" is not key" + g.kv_separator + "value";
    }
    out.params.emplace_back(std::string(tokens[i].substr(0, eq)),
                            std::string(tokens[i].substr(eq + 1)));
  }
  return std::nullopt;
}

}  // namespace detail

// Parses a line-delimited log. Malformed lines and timestamp regressions go
// to the diagnostics list; more than half malformed is a format mismatch.
inline ParsedLog parse_log(std::istream& source, const LogGrammar& grammar = {}) {
  ParsedLog result;
  std::string line;
  std::size_t line_no = 0;
  std::size_t malformed = 0;
  std::optional<std::size_t> first_bad;
  std::optional<TimestampMs> last_ts;
  while (std::getline(source, line)) {
    ++line_no;
    RawLogEntry entry;
    if (auto err = detail::parse_line(line, grammar, entry)) {
      ++malformed;
      if (!first_bad) first_bad = line_no;
      result.diagnostics.push_back({line_no, DiagnosticKind::kMalformed, *err});
      continue;
    }
    if (last_ts && entry.timestamp < *last_ts) {
      result.diagnostics.push_back(
          {line_no, DiagnosticKind::kOutOfOrder,
           "timestamp " + std::to_string(entry.timestamp) + " precedes " + std::to_string(*last_ts)});
    }
    last_ts = std::max(last_ts.value_or(entry.timestamp), entry.timestamp);
    result.entries.push_back(std::move(entry));
    result.line_numbers.push_back(line_no);
  }
  if (source.bad()) throw Error(ErrorKind::kIo, "read error while parsing log");
  if (malformed * 2 > line_no) {
    throw Error(ErrorKind::kFormatMismatch,
                std::to_string(malformed) + " of " + std::to_string(line_no) +
                    " lines do not match the log grammar; first offending line " +
                    std::to_string(*first_bad));
  }
  return result;
}

inline ParsedLog parse_log_file(const std::string& path, const LogGrammar& grammar = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open log " + path);
  return parse_log(in, grammar);
}

inline std::string serialize_entry(const RawLogEntry& e, const LogGrammar& g = {}) {
  std::array<std::string, 3> fields;
  fields[g.timestamp_field] = std::to_string(e.timestamp);
  fields[g.request_field] = e.request_id;
  fields[g.event_field] = e.raw_event_type;
  std::string out = fields[0] + g.field_separator + fields[1] + g.field_separator + fields[2];
  for (const auto& [k, v] : e.params) {
    out += g.field_separator;
    out += k;
    out += g.kv_separator;
    out += v;
  }
  return out;
}

inline std::string serialize_log(const std::vector<RawLogEntry>& entries, const LogGrammar& g = {}) {
  std::string out;
  for (const auto& e : entries) {
    out += serialize_entry(e, g);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operation catalog

struct OperationCatalog {
  std::vector<std::string> operations;
  std::map<std::string, std::string> mapping;  // raw event type -> operation
  std::map<std::string, Turn> turn_owner;

  std::size_t index_of(std::string_view op) const {
    auto it = std::find(operations.begin(), operations.end(), op);
    if (it == operations.end()) {
      throw Error(ErrorKind::kValidation, "unknown operation \"" + std::string(op) + "\"");
    }
    return static_cast<std::size_t>(it - operations.begin());
  }

  bool contains(std::string_view op) const {
    return std::find(operations.begin(), operations.end(), op) != operations.end();
  }

  // Raw event types mapped onto `op`, in lexical order.
  std::vector<std::string> raw_types_for(std::string_view op) const {
    std::vector<std::string> out;
    for (const auto& [raw, target] : mapping) {
      if (target == op) out.push_back(raw);
    }
    return out;
  }

  void validate() const {
    if (operations.empty()) throw Error(ErrorKind::kValidation, "catalog has no operations");
    std::set<std::string> seen;
    for (const auto& op : operations) {
      if (op.empty()) throw Error(ErrorKind::kValidation, "catalog has an empty operation name");
      if (!seen.insert(op).second) {
        throw Error(ErrorKind::kValidation, "catalog repeats operation \"" + op + "\"");
      }
      if (!turn_owner.count(op)) {
        throw Error(ErrorKind::kValidation, "catalog has no turn owner for \"" + op + "\"");
      }
    }
    for (const auto& [raw, op] : mapping) {
      if (!seen.count(op)) {
        throw Error(ErrorKind::kValidation,
                    "catalog maps \"" + raw + "\" to unknown operation \"" + op + "\"");
      }
    }
  }

  // Invented default: nine steps from initiate to close. Real deployments
  // replace this with a catalog file.
  static OperationCatalog default_catalog() {
    OperationCatalog c;
    c.operations = {"initiate", "identify", "verify", "upload", "review",
                    "execute",  "pay",      "confirm", "close"};
    const std::vector<std::pair<std::string, std::vector<std::string>>> raw = {
        {"initiate", {"BEGIN_SERVICE", "QUEUE_CALL"}},
        {"identify", {"ID_SCAN", "ID_READ"}},
        {"verify", {"VERIFY_REQ", "VERIFY_OK"}},
        {"upload", {"DOC_SCAN", "DOC_UPLOAD"}},
        {"review", {"FORM_REVIEW", "FORM_EDIT"}},
        {"execute", {"TXN_EXEC", "TXN_COMMIT"}},
        {"pay", {"PAY_REQ", "PAY_OK"}},
        {"confirm", {"RECEIPT_PRINT", "CONFIRM_SIGN"}},
        {"close", {"SURVEY_PROMPT", "END_SERVICE"}},
    };
    for (const auto& [op, types] : raw) {
      for (const auto& t : types) c.mapping[t] = op;
    }
    c.turn_owner = {{"initiate", Turn::kAgent}, {"identify", Turn::kClient},
                    {"verify", Turn::kAgent},   {"upload", Turn::kClient},
                    {"review", Turn::kAgent},   {"execute", Turn::kAgent},
                    {"pay", Turn::kClient},     {"confirm", Turn::kClient},
                    {"close", Turn::kAgent}};
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["operations"] = operations;
    j["mapping"] = mapping;
    nlohmann::json owners = nlohmann::json::object();
    for (const auto& [op, t] : turn_owner) owners[op] = to_string(t);
    j["turn_owner"] = owners;
    return j;
  }

  static OperationCatalog from_json(const nlohmann::json& j) {
    OperationCatalog c;
    try {
      c.operations = j.at("operations").get<std::vector<std::string>>();
      c.mapping = j.at("mapping").get<std::map<std::string, std::string>>();
      for (const auto& [op, v] : j.at("turn_owner").items()) {
        auto t = parse_turn(v.get<std::string>());
        if (!t) throw Error(ErrorKind::kValidation, "turn owner for \"" + op + "\" must be agent or client");
        c.turn_owner[op] = *t;
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kValidation, std::string("catalog: ") + e.what());
    }
    c.validate();
    return c;
  }

  static OperationCatalog load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kIo, "cannot open catalog " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kValidation, "catalog " + path + ": " + e.what());
    }
    return from_json(j);
  }
};

// ---------------------------------------------------------------------------
// Segmentation

struct ServiceSession {
  std::string service_id;
  std::string agent_id;
  std::string client_id;
  std::string request_id;
  TimestampMs begin_ts = 0;
  TimestampMs end_ts = 0;
  std::vector<RawLogEntry> entries;
  std::optional<std::string> video_uri;

  double duration_s() const { return ms_to_seconds(end_ts - begin_ts); }
};

struct SegmentationConfig {
  std::string begin_type = "BEGIN_SERVICE";
  std::string end_type = "END_SERVICE";
};

struct SegmentationResult {
  std::vector<ServiceSession> sessions;       // closed, in BEGIN order
  std::vector<ServiceSession> open_sessions;  // BEGIN without END; end_ts = last entry
  std::vector<RawLogEntry> orphans;
  std::vector<Diagnostic> diagnostics;
};

// Pairs BEGIN/END messages that share a request id. `line_numbers`, when
// given, is parallel to `entries` and only feeds the diagnostics.
inline SegmentationResult segment_services(const std::vector<RawLogEntry>& entries,
                                           const SegmentationConfig& config = {},
                                           const std::vector<std::size_t>& line_numbers = {}) {
  SegmentationResult result;
  struct Open {
    ServiceSession session;
    std::size_t order;
    std::size_t begin_line;
  };
  std::unordered_map<std::string, Open> open;
  std::vector<std::pair<std::size_t, ServiceSession>> closed;
  std::size_t order = 0;
  auto line_of = [&](std::size_t i) { return i < line_numbers.size() ? line_numbers[i] : i + 1; };

  auto start = [&](const RawLogEntry& e, std::size_t i) {
    Open o;
    o.session.request_id = e.request_id;
    o.session.service_id = e.param("service").value_or(e.request_id);
    o.session.agent_id = e.param("agent").value_or("");
    o.session.client_id = e.param("client").value_or("");
    o.session.video_uri = e.param("video");
    o.session.begin_ts = e.timestamp;
    o.session.entries.push_back(e);
    o.order = order++;
    o.begin_line = line_of(i);
    open[e.request_id] = std::move(o);
  };
  auto abandon = [&](Open& o, const std::string& why) {
    o.session.end_ts = o.session.entries.back().timestamp;
    result.diagnostics.push_back({o.begin_line, DiagnosticKind::kUnterminated,
                                  "request " + o.session.request_id + ": " + why});
    result.open_sessions.push_back(std::move(o.session));
  };

  for (std::size_t i = 0; i < entries.size(); ++i) {
    const RawLogEntry& e = entries[i];
    auto it = open.find(e.request_id);
    if (e.raw_event_type == config.begin_type) {
      if (it != open.end()) {
        result.diagnostics.push_back({line_of(i), DiagnosticKind::kDuplicateBegin,
                                      "request " + e.request_id + " begins again before ending"});
        abandon(it->second, "superseded by a later BEGIN");
        open.erase(it);
      }
      start(e, i);
      continue;
    }
    if (it == open.end()) {
      result.diagnostics.push_back({line_of(i), DiagnosticKind::kOrphan,
                                    e.raw_event_type + " for request " + e.request_id +
                                        " outside any open service"});
      result.orphans.push_back(e);
      continue;
    }
    it->second.session.entries.push_back(e);
    if (e.raw_event_type == config.end_type) {
      Open o = std::move(it->second);
      open.erase(it);
      o.session.end_ts = e.timestamp;
      if (o.session.end_ts <= o.session.begin_ts) {
        result.diagnostics.push_back({o.begin_line, DiagnosticKind::kEmptySession,
                                      "request " + o.session.request_id + " ends at its begin instant"});
        result.open_sessions.push_back(std::move(o.session));
        continue;
      }
      closed.emplace_back(o.order, std::move(o.session));
    }
  }
  std::vector<Open> remaining;
  for (auto& [id, o] : open) remaining.push_back(std::move(o));
  std::sort(remaining.begin(), remaining.end(),
            [](const Open& a, const Open& b) { return a.order < b.order; });
  for (auto& o : remaining) abandon(o, "no END message");

  std::sort(closed.begin(), closed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [ord, s] : closed) result.sessions.push_back(std::move(s));
  return result;
}

// ---------------------------------------------------------------------------
// Run-length service record

struct RecordItem {
  std::string operation;
  int count = 1;
  TimestampMs start_ts = 0;
  TimestampMs end_ts = 0;
  Turn turn = Turn::kAgent;

  double duration_s() const { return ms_to_seconds(end_ts - start_ts); }
  bool operator==(const RecordItem&) const = default;
};

struct ServiceRecordVector {
  std::vector<RecordItem> items;
  TimestampMs begin_ts = 0;
  TimestampMs end_ts = 0;

  bool empty() const { return items.empty(); }
  std::size_t size() const { return items.size(); }
  double duration_s() const { return ms_to_seconds(end_ts - begin_ts); }

  // Index of the item whose half-open span holds `ts`; the last item also
  // owns its end instant.
  std::optional<std::size_t> item_at(TimestampMs ts) const {
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& it = items[i];
      bool last = i + 1 == items.size();
      if (ts >= it.start_ts && (ts < it.end_ts || (last && ts <= it.end_ts))) return i;
    }
    return std::nullopt;
  }

  bool operator==(const ServiceRecordVector&) const = default;
};

inline nlohmann::json to_json(const ServiceRecordVector& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : r.items) {
    items.push_back({{"operation", it.operation},
                     {"count", it.count},
                     {"start_ts", it.start_ts},
                     {"end_ts", it.end_ts},
                     {"turn", to_string(it.turn)}});
  }
  return {{"begin_ts", r.begin_ts}, {"end_ts", r.end_ts}, {"items", items}};
}

inline ServiceRecordVector record_from_json(const nlohmann::json& j) {
  ServiceRecordVector r;
  r.begin_ts = j.at("begin_ts").get<TimestampMs>();
  r.end_ts = j.at("end_ts").get<TimestampMs>();
  for (const auto& it : j.at("items")) {
    RecordItem item;
    item.operation = it.at("operation").get<std::string>();
    item.count = it.at("count").get<int>();
    item.start_ts = it.at("start_ts").get<TimestampMs>();
    item.end_ts = it.at("end_ts").get<TimestampMs>();
    auto t = parse_turn(it.at("turn").get<std::string>());
    if (!t) throw Error(ErrorKind::kValidation, "record item has an invalid turn");
    item.turn = *t;
    r.items.push_back(std::move(item));
  }
  return r;
}

// Merges consecutive entries that map to the same operation. An item runs
// until the next item starts; the last one runs to the session end.
inline ServiceRecordVector aggregate_operations(const ServiceSession& session,
                                                const OperationCatalog& catalog) {
  std::set<std::string> unknown;
  for (const auto& e : session.entries) {
    if (!catalog.mapping.count(e.raw_event_type)) unknown.insert(e.raw_event_type);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    throw Error(ErrorKind::kValidation, "unmapped raw event types: " + list);
  }

  ServiceRecordVector record;
  record.begin_ts = session.begin_ts;
  record.end_ts = session.end_ts;
  for (const auto& e : session.entries) {
    const std::string& op = catalog.mapping.at(e.raw_event_type);
    if (!record.items.empty() && record.items.back().operation == op) {
      ++record.items.back().count;
      continue;
    }
    RecordItem item;
    item.operation = op;
    item.start_ts = e.timestamp;
    item.turn = catalog.turn_owner.at(op);
    if (auto t = e.param("turn")) {
      if (auto parsed = parse_turn(*t)) item.turn = *parsed;
    }
    record.items.push_back(std::move(item));
  }
  for (std::size_t i = 0; i < record.items.size(); ++i) {
    record.items[i].end_ts =
        i + 1 < record.items.size() ? record.items[i + 1].start_ts : session.end_ts;
  }
  return record;
}

}  // namespace svcanchor

#endif  // SVCANCHOR_EVENT_LOG_HPP_
