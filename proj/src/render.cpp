// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#include <map>
#include <set>
#include <sstream>

#include "claimscope/error.hpp"
#include "claimscope/fusion.hpp"
#include "claimscope/text.hpp"

namespace claimscope {
namespace {

const char* kStyle = R"(
body { font-family: Georgia, serif; max-width: 52em; margin: 2em auto; line-height: 1.6; color: #222; }
.doc { font-size: 1.1em; }
.target { background: #b7e4b0; }
.premise { background: #ffe98a; }
.contradiction { background: #f7a8a8; }
.candidate { outline: 1px dashed #888; }
.legend span { padding: 0 .4em; margin-right: .8em; }
table { border-collapse: collapse; margin-top: 1.5em; font-size: .9em; }
td, th { border: 1px solid #ccc; padding: .2em .6em; text-align: left; }
)";

std::string escape_html(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string slice(const Document& doc, std::size_t begin, std::size_t end) {
  return text::to_utf8(std::u32string_view(doc.codepoints()).substr(begin, end - begin));
}

std::string fixed(double v, int precision = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

// Role of each sentence for display: "target", "premise", "contradiction",
// "candidate" (labeled but filtered out) or empty.
std::map<std::size_t, std::string> display_roles(const AnalysisResult& result) {
  std::map<std::size_t, std::string> roles;
  roles[result.target] = "target";
  for (const auto& a : result.annotations) {
    roles[a.index] = a.passed_fusion ? std::string(to_string(a.role)) : "candidate";
  }
  return roles;
}

std::string render_html(const AnalysisResult& result, const Document& doc) {
  const auto roles = display_roles(result);
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
       << "<title>Claim analysis</title>\n<style>" << kStyle << "</style>\n</head>\n<body>\n"
       << "<p class=\"legend\"><span class=\"target\">target</span>"
       << "<span class=\"premise\">premise</span>"
       << "<span class=\"contradiction\">contradiction</span></p>\n<p class=\"doc\">";

  std::size_t cursor = 0;
  for (const auto& s : doc.sentences()) {
    html << escape_html(slice(doc, cursor, s.char_start));
    const std::string body = escape_html(slice(doc, s.char_start, s.char_end));
    auto it = roles.find(s.index);
    if (it == roles.end()) {
      html << body;
    } else {
      html << "<span class=\"" << it->second << "\" data-index=\"" << s.index << "\">" << body
           << "</span>";
    }
    cursor = s.char_end;
  }
  html << escape_html(slice(doc, cursor, doc.length())) << "</p>\n";

  html << "<table>\n<tr><th>sentence</th><th>role</th><th>saliency</th><th>NLI confidence</th>"
       << "<th>passed</th></tr>\n";
  for (const auto& a : result.annotations) {
    html << "<tr><td>" << a.index << "</td><td>" << to_string(a.role) << "</td><td>"
         << fixed(a.saliency) << "</td><td>" << fixed(a.nli_confidence, 3) << "</td><td>"
         << (a.passed_fusion ? "yes" : "no") << "</td></tr>\n";
  }
  html << "</table>\n<p>mean saliency " << fixed(result.stats.mean) << ", std "
       << fixed(result.stats.std) << ", threshold " << fixed(result.tau_effective) << "</p>\n"
       << "</body>\n</html>\n";
  return html.str();
}

std::string render_terminal(const AnalysisResult& result, const Document& doc) {
  static const std::map<std::string, std::string> kColors = {
      {"target", "\x1b[30;42m"},
      {"premise", "\x1b[30;43m"},
      {"contradiction", "\x1b[30;41m"},
      {"candidate", "\x1b[4m"},
  };
  const auto roles = display_roles(result);
  std::ostringstream out;
  std::size_t cursor = 0;
  for (const auto& s : doc.sentences()) {
    out << slice(doc, cursor, s.char_start);
    auto it = roles.find(s.index);
    if (it != roles.end()) out << kColors.at(it->second);
    out << slice(doc, s.char_start, s.char_end);
    if (it != roles.end()) out << "\x1b[0m";
    cursor = s.char_end;
  }
  out << "\n\n";
  for (const auto& a : result.annotations) {
    out << "  [" << a.index << "] " << to_string(a.role) << "  saliency=" << fixed(a.saliency)
        << "  nli=" << fixed(a.nli_confidence, 3) << (a.passed_fusion ? "" : "  (filtered)") << "\n";
  }
  out << "  mean=" << fixed(result.stats.mean) << " std=" << fixed(result.stats.std)
      << " threshold=" << fixed(result.tau_effective) << "\n";
  return out.str();
}

}  // namespace

RenderFormat parse_render_format(std::string_view s) {
  if (s == "json") return RenderFormat::kJson;
  if (s == "html") return RenderFormat::kHtml;
  if (s == "terminal") return RenderFormat::kTerminal;
  throw Error(ErrorCode::kInvalidArgument, "unknown format '" + std::string(s) + "'");
}

std::string render_annotations(const AnalysisResult& result, const Document& doc,
                               RenderFormat format) {
  switch (format) {
    case RenderFormat::kJson: return to_json(result).dump(2) + "\n";
    case RenderFormat::kHtml: return render_html(result, doc);
    case RenderFormat::kTerminal: return render_terminal(result, doc);
  }
  return {};
}

nlohmann::json to_json(const AnalysisResult& r) {
  nlohmann::json annotations = nlohmann::json::array();
  for (const auto& a : r.annotations) {
    annotations.push_back({{"index", a.index},
                           {"role", to_string(a.role)},
                           {"saliency", a.saliency},
                           {"nli_confidence", a.nli_confidence},
                           {"passed_fusion", a.passed_fusion}});
  }
  nlohmann::json j = {
      {"doc_id", r.doc_id},
      {"target", r.target},
      {"policy", to_json(r.policy)},
      {"stats", to_json(r.stats)},
      {"tau_effective", r.tau_effective},
      {"annotations", annotations},
      {"timings",
       {{"attention_ms", r.timings.attention_ms},
        {"saliency_ms", r.timings.saliency_ms},
        {"nli_ms", r.timings.nli_ms}}},
  };
  if (!r.failures.empty()) {
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& [index, message] : r.failures) {
      failures.push_back({{"index", index}, {"message", message}});
    }
    j["failures"] = failures;
  }
  return j;
}

AnalysisResult result_from_json(const nlohmann::json& j) {
  if (auto errors = validate_result_json(j); !errors.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid result JSON: " + errors.front());
  }
  AnalysisResult r;
  r.doc_id = j["doc_id"].get<std::string>();
  r.target = j["target"].get<std::size_t>();
  r.policy = policy_from_json(j["policy"]);
  r.stats.mean = j["stats"]["mean"].get<double>();
  r.stats.std = j["stats"]["std"].get<double>();
  if (j["stats"].contains("included")) {
    r.stats.included = parse_stats_rule(j["stats"]["included"].get<std::string>());
  }
  r.tau_effective = j.value("tau_effective", 0.0);
  for (const auto& a : j["annotations"]) {
    r.annotations.push_back({a["index"].get<std::size_t>(), parse_relation(a["role"].get<std::string>()),
                             a["saliency"].get<double>(), a["nli_confidence"].get<double>(),
                             a["passed_fusion"].get<bool>()});
  }
  r.timings.attention_ms = j["timings"]["attention_ms"].get<double>();
  r.timings.saliency_ms = j["timings"]["saliency_ms"].get<double>();
  r.timings.nli_ms = j["timings"]["nli_ms"].get<double>();
  if (j.contains("failures")) {
    for (const auto& f : j["failures"]) {
      r.failures[f.at("index").get<std::size_t>()] = f.at("message").get<std::string>();
    }
  }
  return r;
}

std::vector<std::string> validate_result_json(const nlohmann::json& j) {
  std::vector<std::string> errors;
  auto require = [&](const nlohmann::json& obj, const char* key, auto check, const char* what,
                     const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
      errors.push_back(where + "." + key + " is missing");
      return false;
    }
    if (!check(obj[key])) {
      errors.push_back(where + "." + key + " must be " + what);
      return false;
    }
    return true;
  };
  auto is_string = [](const nlohmann::json& v) { return v.is_string(); };
  auto is_index = [](const nlohmann::json& v) { return v.is_number_unsigned(); };
  auto is_number = [](const nlohmann::json& v) { return v.is_number(); };
  auto is_nonneg = [](const nlohmann::json& v) { return v.is_number() && v.get<double>() >= 0.0; };
  auto is_object = [](const nlohmann::json& v) { return v.is_object(); };
  auto is_array = [](const nlohmann::json& v) { return v.is_array(); };
  auto is_bool = [](const nlohmann::json& v) { return v.is_boolean(); };
  auto one_of = [](std::initializer_list<const char*> names) {
    return [names](const nlohmann::json& v) {
      if (!v.is_string()) return false;
      for (const char* n : names) {
        if (v.get<std::string>() == n) return true;
      }
      return false;
    };
  };

  if (!j.is_object()) return {"result must be an object"};
  if (require(j, "doc_id", is_string, "a string", "$")) {
    const auto id = j["doc_id"].get<std::string>();
    if (id.size() != 64 || id.find_first_not_of("0123456789abcdef") != std::string::npos) {
      errors.push_back("$.doc_id must be 64 lowercase hex characters");
    }
  }
  require(j, "target", is_index, "a non-negative integer", "$");
  if (require(j, "policy", is_object, "an object", "$")) {
    const auto& p = j["policy"];
    require(p, "mode", one_of({"absolute", "relative", "top_m"}), "absolute|relative|top_m", "$.policy");
    require(p, "direction", one_of({"outgoing", "incoming", "max_both"}),
            "outgoing|incoming|max_both", "$.policy");
    if (require(p, "params", is_object, "an object", "$.policy") && p.contains("mode") &&
        p["mode"].is_string()) {
      const auto mode = p["mode"].get<std::string>();
      if (mode == "absolute") require(p["params"], "tau", is_nonneg, "a number >= 0", "$.policy.params");
      if (mode == "relative") require(p["params"], "k", is_number, "a number", "$.policy.params");
      if (mode == "top_m") {
        require(p["params"], "m", [](const nlohmann::json& v) { return v.is_number_unsigned() && v.get<std::size_t>() >= 1; },
                "an integer >= 1", "$.policy.params");
      }
    }
  }
  if (require(j, "stats", is_object, "an object", "$")) {
    require(j["stats"], "mean", is_nonneg, "a number >= 0", "$.stats");
    require(j["stats"], "std", is_nonneg, "a number >= 0", "$.stats");
  }
  if (require(j, "annotations", is_array, "an array", "$")) {
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < j["annotations"].size(); ++i) {
      const auto& a = j["annotations"][i];
      const std::string where = "$.annotations[" + std::to_string(i) + "]";
      if (require(a, "index", is_index, "a non-negative integer", where)) {
        const auto index = a["index"].get<std::size_t>();
        if (!seen.insert(index).second) errors.push_back(where + ".index is duplicated");
        if (j.contains("target") && j["target"].is_number_unsigned() &&
            index == j["target"].get<std::size_t>()) {
          errors.push_back(where + " annotates the target itself");
        }
      }
      require(a, "role", one_of({"premise", "contradiction"}), "premise|contradiction", where);
      require(a, "saliency", is_nonneg, "a number >= 0", where);
      require(a, "nli_confidence", [](const nlohmann::json& v) {
        return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0;
      }, "a number in [0, 1]", where);
      require(a, "passed_fusion", is_bool, "a boolean", where);
    }
  }
  if (require(j, "timings", is_object, "an object", "$")) {
    for (const char* key : {"attention_ms", "saliency_ms", "nli_ms"}) {
      require(j["timings"], key, is_nonneg, "a number >= 0", "$.timings");
    }
  }
  return errors;
}

}  // namespace claimscope
