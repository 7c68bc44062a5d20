#include "dlava/answer_parser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>

#include "dlava/error.hpp"
#include "dlava/json_io.hpp"
#include "dlava/text.hpp"

namespace dlava::model {

using json_io::OrderedJson;

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }
bool is_number_char(char c) {
  return std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.' || c == 'e' || c == 'E';
}

char last_significant(const std::string& out) {
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    if (!std::isspace(static_cast<unsigned char>(*it))) return *it;
  }
  return '\0';
}

void drop_trailing_comma(std::string& out) {
  auto end = out.find_last_not_of(" \t\r\n");
  if (end != std::string::npos && out[end] == ',') out.erase(end, 1);
}

bool ends_value(char c) {
  return c == '"' || c == '}' || c == ']' || std::isdigit(static_cast<unsigned char>(c)) || c == 'e' || c == 'l';
}

// Emits a separating comma when two values touch without one.
void separate(std::string& out) {
  if (ends_value(last_significant(out))) out += ',';
}

std::string quote(std::string_view s) { return OrderedJson(std::string(s)).dump(); }

std::string strip_fences(std::string_view raw) {
  const auto fence = raw.find("```");
  if (fence == std::string_view::npos) return text::trim(raw);
  auto body_start = raw.find('\n', fence);
  if (body_start == std::string_view::npos) {
    body_start = fence + 3;
    while (body_start < raw.size() && std::isalpha(static_cast<unsigned char>(raw[body_start]))) ++body_start;
  } else {
    ++body_start;
  }
  const auto close = raw.find("```", body_start);
  return text::trim(raw.substr(body_start, close == std::string_view::npos ? std::string_view::npos : close - body_start));
}

// From the first `open` to its matching closer, skipping quoted text. Runs to
// the end of the input when unbalanced.
std::optional<std::string> first_balanced_span(std::string_view s, char open, char close) {
  const auto start = s.find(open);
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  char in_string = 0;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == in_string) {
        in_string = 0;
      }
      continue;
    }
    if (c == '"') {
      in_string = c;
    } else if (c == open) {
      ++depth;
    } else if (c == close && --depth == 0) {
      return std::string(s.substr(start, i - start + 1));
    }
  }
  return std::string(s.substr(start));
}

std::optional<OrderedJson> try_parse(const std::string& s) {
  auto j = OrderedJson::parse(s, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

}  // namespace

std::string repair_json_text(std::string_view in) {
  std::string out;
  std::vector<char> closers;
  std::size_t i = 0;
  while (i < in.size()) {
    const char c = in[i];
    if (c == '"' || c == '\'') {
      separate(out);
      std::string content;
      std::size_t j = i + 1;
      bool closed = false;
      for (; j < in.size(); ++j) {
        const char d = in[j];
        if (d == '\\' && j + 1 < in.size()) {
          const char e = in[j + 1];
          if (c == '\'' && e == '\'') {
            content += '\'';
          } else {
            content += d;
            content += e;
          }
          ++j;
          continue;
        }
        if (d == c) {
          closed = true;
          break;
        }
        if (c == '\'' && d == '"') {
          content += "\\\"";
        } else if (d == '\n') {
          content += "\\n";
        } else {
          content += d;
        }
      }
      out += '"' + content + '"';
      i = closed ? j + 1 : in.size();
      continue;
    }
    if (c == '/' && i + 1 < in.size() && in[i + 1] == '/') {
      while (i < in.size() && in[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < in.size() && in[i + 1] == '*') {
      const auto end = in.find("*/", i + 2);
      i = end == std::string_view::npos ? in.size() : end + 2;
      continue;
    }
    if (c == '{' || c == '[') {
      separate(out);
      closers.push_back(c == '{' ? '}' : ']');
      out += c;
      ++i;
      continue;
    }
    if (c == '}' || c == ']') {
      drop_trailing_comma(out);
      if (std::find(closers.begin(), closers.end(), c) != closers.end()) {
        while (!closers.empty() && closers.back() != c) {
          out += closers.back();
          closers.pop_back();
        }
        out += c;
        closers.pop_back();
      }
      ++i;
      continue;
    }
    if (c == ',' ) {
      if (last_significant(out) != ',' && !out.empty()) out += ',';
      ++i;
      continue;
    }
    if (c == ':' || c == '=') {
      out += ':';
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || ((c == '-' || c == '+' || c == '.') && i + 1 < in.size() &&
                                                        std::isdigit(static_cast<unsigned char>(in[i + 1])))) {
      separate(out);
      std::size_t j = i;
      while (j < in.size() && is_number_char(in[j])) ++j;
      std::string number(in.substr(i, j - i));
      if (number.front() == '+') number.erase(0, 1);
      if (number.front() == '.') number.insert(0, "0");
      out += number;
      i = j;
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < in.size() && is_ident_char(in[j])) ++j;
      const std::string ident(in.substr(i, j - i));
      std::size_t k = j;
      while (k < in.size() && (in[k] == ' ' || in[k] == '\t')) ++k;
      separate(out);
      if (k < in.size() && (in[k] == ':' || in[k] == '=')) {
        out += quote(ident);
        i = j;
        continue;
      }
      if (ident == "true" || ident == "True") {
        out += "true";
      } else if (ident == "false" || ident == "False") {
        out += "false";
      } else if (ident == "null" || ident == "None" || ident == "nil") {
        out += "null";
      } else {
        // Bare text value: runs to the next structural character.
        std::size_t end = i;
        while (end < in.size() && in[end] != ',' && in[end] != '}' && in[end] != ']' && in[end] != '\n') ++end;
        out += quote(text::trim(in.substr(i, end - i)));
        i = end;
        continue;
      }
      i = j;
      continue;
    }
    if (!std::isspace(static_cast<unsigned char>(c)) && closers.empty()) {
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) out += c;
    ++i;
  }
  drop_trailing_comma(out);
  while (!closers.empty()) {
    out += closers.back();
    closers.pop_back();
  }
  return out;
}

namespace {

constexpr std::string_view kAnswerKeys[] = {"answer", "text", "value", "answer_text", "final_answer", "a"};
constexpr std::string_view kIdKeys[] = {"region_ids", "box_ids", "ids", "region_id", "box_id", "regions", "id_list"};
constexpr std::string_view kBoxKeys[] = {"box", "bbox", "bounding_box", "answer_box", "boundingbox",
                                         "coordinates", "coords", "location", "b_a"};
constexpr std::string_view kNoteKeys[] = {"confidence_note", "confidence", "note", "explanation"};

template <std::size_t N>
bool key_in(const std::string& key, const std::string_view (&keys)[N]) {
  const auto lower = text::to_lower_ascii(key);
  return std::find(std::begin(keys), std::end(keys), lower) != std::end(keys);
}

// Breadth-first search for the first key of the family whose value passes
// `accept`.
template <std::size_t N, typename Accept>
const OrderedJson* find_key(const OrderedJson& root, const std::string_view (&keys)[N], Accept&& accept) {
  std::deque<const OrderedJson*> queue{&root};
  while (!queue.empty()) {
    const auto* node = queue.front();
    queue.pop_front();
    if (node->is_object()) {
      for (const auto& [key, value] : node->items()) {
        if (key_in(key, keys) && accept(value)) return &value;
      }
      for (const auto& [key, value] : node->items()) {
        if (value.is_structured()) queue.push_back(&value);
      }
    } else if (node->is_array()) {
      for (const auto& value : *node) {
        if (value.is_object()) queue.push_back(&value);
      }
    }
  }
  return nullptr;
}

std::optional<double> as_number(const OrderedJson& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = text::trim(v.get<std::string>());
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (end && *end == '\0') return d;
  }
  return std::nullopt;
}

std::vector<std::int32_t> ids_in_string(std::string_view s) {
  std::vector<std::int32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      std::size_t j = i;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      if (j - i <= 9) out.push_back(static_cast<std::int32_t>(std::stol(std::string(s.substr(i, j - i)))));
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

bool looks_like_id_string(std::string_view s) {
  const auto t = text::trim(s);
  if (t.empty()) return false;
  std::size_t i = 0;
  if (t[i] == '(' || t[i] == '[') ++i;
  if (i < t.size() && (t[i] == 'B' || t[i] == 'b')) return i + 1 < t.size() && std::isdigit(static_cast<unsigned char>(t[i + 1]));
  return false;
}

std::optional<std::vector<std::int32_t>> coerce_ids(const OrderedJson& v) {
  std::vector<std::int32_t> out;
  if (v.is_number_integer() || v.is_number_unsigned()) {
    out.push_back(v.get<std::int32_t>());
  } else if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d != std::floor(d)) return std::nullopt;
    out.push_back(static_cast<std::int32_t>(d));
  } else if (v.is_string()) {
    out = ids_in_string(v.get<std::string>());
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (auto sub = coerce_ids(e)) out.insert(out.end(), sub->begin(), sub->end());
    }
  } else if (v.is_object()) {
    for (const char* k : {"id", "region_id", "box_id"}) {
      if (v.contains(k)) return coerce_ids(v[k]);
    }
    return std::nullopt;
  } else {
    return std::nullopt;
  }
  if (out.empty()) return std::nullopt;
  return out;
}

std::optional<BBox> box_from_numbers(double x1, double y1, double x2, double y2) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) return std::nullopt;
  if (x1 < 0 || y1 < 0 || x2 < 0 || y2 < 0) return std::nullopt;
  const BBox b = round_outward(std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2));
  return b;
}

struct BoxOrIds {
  std::optional<BBox> box;
  std::optional<std::vector<std::int32_t>> ids;
};

BoxOrIds coerce_box(const OrderedJson& v) {
  BoxOrIds out;
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (looks_like_id_string(s)) {
      out.ids = coerce_ids(v);
      return out;
    }
    if (auto parsed = try_parse(repair_json_text(s)); parsed && parsed->is_structured()) return coerce_box(*parsed);
    return out;
  }
  if (v.is_array()) {
    if (v.size() == 4) {
      std::optional<double> n[4];
      bool numeric = true;
      for (std::size_t i = 0; i < 4; ++i) numeric = numeric && (n[i] = as_number(v[i])).has_value();
      if (numeric) {
        out.box = box_from_numbers(*n[0], *n[1], *n[2], *n[3]);
        return out;
      }
    }
    const bool points = !v.empty() && std::all_of(v.begin(), v.end(), [](const OrderedJson& p) {
      return p.is_array() && p.size() == 2 && as_number(p[0]) && as_number(p[1]);
    });
    if (points && (v.size() == 2 || v.size() == 4)) {
      double x1 = 1e18, y1 = 1e18, x2 = -1e18, y2 = -1e18;
      for (const auto& p : v) {
        x1 = std::min(x1, *as_number(p[0]));
        y1 = std::min(y1, *as_number(p[1]));
        x2 = std::max(x2, *as_number(p[0]));
        y2 = std::max(y2, *as_number(p[1]));
      }
      out.box = box_from_numbers(x1, y1, x2, y2);
      return out;
    }
    if (v.size() == 1 && v[0].is_array()) return coerce_box(v[0]);
    const bool id_strings = !v.empty() && std::all_of(v.begin(), v.end(), [](const OrderedJson& e) {
      return e.is_string() && looks_like_id_string(e.get<std::string>());
    });
    if (id_strings) out.ids = coerce_ids(v);
    return out;
  }
  if (v.is_object()) {
    auto get = [&](std::initializer_list<const char*> keys) -> std::optional<double> {
      for (const char* k : keys) {
        if (v.contains(k)) return as_number(v[k]);
      }
      return std::nullopt;
    };
    const auto x1 = get({"x1", "left", "xmin", "x_min"});
    const auto y1 = get({"y1", "top", "ymin", "y_min"});
    const auto x2 = get({"x2", "right", "xmax", "x_max"});
    const auto y2 = get({"y2", "bottom", "ymax", "y_max"});
    if (x1 && y1 && x2 && y2) {
      out.box = box_from_numbers(*x1, *y1, *x2, *y2);
      return out;
    }
    const auto x = get({"x"}), y = get({"y"}), w = get({"w", "width"}), h = get({"h", "height"});
    if (x && y && w && h) out.box = box_from_numbers(*x, *y, *x + *w, *y + *h);
    return out;
  }
  return out;
}

bool is_not_found_literal(std::string s) {
  s = text::to_lower_ascii(text::trim(s));
  while (!s.empty() && (s.back() == '.' || s.back() == '!')) s.pop_back();
  static const std::string_view kLiterals[] = {"",     "not found",     "n/a",          "na",        "none",
                                               "null", "not available", "unanswerable", "no answer", "not present",
                                               "notfound", "not_found"};
  return std::find(std::begin(kLiterals), std::end(kLiterals), s) != std::end(kLiterals);
}

std::optional<std::string> answer_text(const OrderedJson& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return std::to_string(v.get<long long>());
  if (v.is_number_float()) return v.dump();
  if (v.is_null()) return std::string();
  if (v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), [](const OrderedJson& e) { return e.is_string(); })) {
    std::string joined;
    for (const auto& e : v) joined += (joined.empty() ? "" : " ") + e.get<std::string>();
    return joined;
  }
  return std::nullopt;
}

[[noreturn]] void parse_failure(std::string_view raw, std::string_view why) {
  throw Error(ErrorKind::kParse, "unparseable model output (" + std::string(why) + "): " + std::string(raw), "parse");
}

}  // namespace

GroundedAnswer parse_grounded_answer(std::string_view raw, const ParseContext& context) {
  const auto body = strip_fences(raw);
  std::optional<OrderedJson> parsed = try_parse(body);
  if (!parsed || !parsed->is_structured()) {
    parsed.reset();
    const auto brace = body.find('{');
    const auto bracket = body.find('[');
    std::optional<std::string> span;
    if (brace != std::string::npos && (bracket == std::string::npos || brace < bracket || true)) {
      span = first_balanced_span(body, '{', '}');
    }
    if (!span && bracket != std::string::npos) span = first_balanced_span(body, '[', ']');
    if (!span) parse_failure(raw, "no structured object");
    parsed = try_parse(*span);
    if (!parsed) parsed = try_parse(repair_json_text(*span));
    if (!parsed) parse_failure(raw, "irreparable JSON");
  }

  GroundedAnswer out;
  const OrderedJson& root = *parsed;
  bool found_any = false;

  if (root.is_array()) {
    if (auto ids = coerce_ids(root)) {
      out.region_ids = ids;
      found_any = true;
    }
  }

  const auto* answer_node = find_key(root, kAnswerKeys, [](const OrderedJson& v) { return answer_text(v).has_value(); });
  if (answer_node) {
    found_any = true;
    const auto answer = *answer_text(*answer_node);
    if (is_not_found_literal(answer)) {
      out.not_found = true;
    } else {
      out.answer = text::trim(answer);
    }
  }

  if (const auto* ids_node = find_key(root, kIdKeys, [](const OrderedJson& v) { return coerce_ids(v).has_value(); })) {
    out.region_ids = coerce_ids(*ids_node);
    found_any = true;
  }
  const auto* box_node = find_key(root, kBoxKeys, [](const OrderedJson& v) {
    const auto c = coerce_box(v);
    return c.box.has_value() || c.ids.has_value();
  });
  if (box_node) {
    found_any = true;
    auto coerced = coerce_box(*box_node);
    out.box = coerced.box;
    if (!out.region_ids && coerced.ids) out.region_ids = coerced.ids;
  }
  if (const auto* note = find_key(root, kNoteKeys, [](const OrderedJson& v) { return v.is_string(); })) {
    out.confidence_note = note->get<std::string>();
  }
  if (!found_any) parse_failure(raw, "no answer, region ids or box");

  if (out.region_ids) {
    std::vector<std::int32_t> kept;
    for (auto id : *out.region_ids) {
      if (context.valid_ids && !context.valid_ids->count(id)) continue;
      if (std::find(kept.begin(), kept.end(), id) == kept.end()) kept.push_back(id);
    }
    out.region_ids = kept.empty() ? std::nullopt : std::optional(kept);
  }
  if (out.box && out.box->area() == 0) out.box.reset();
  return out;
}

std::string to_json(const GroundedAnswer& a) {
  OrderedJson j = OrderedJson::object();
  if (a.not_found) {
    j["answer"] = "not found";
  } else if (!a.answer.empty()) {
    j["answer"] = a.answer;
  }
  if (a.region_ids) j["region_ids"] = *a.region_ids;
  if (a.box) j["box"] = json_io::box_to_json(*a.box);
  if (a.confidence_note) j["confidence_note"] = *a.confidence_note;
  return j.dump();
}

}  // namespace dlava::model
