#pragma once

#include <string>

#include <json.hpp>

#include "nsakit/rewrite.hpp"

namespace nsa {

using Json = nlohmann::ordered_json;

inline Json trace_to_json(const RewriteTrace& tr) {
  Json j;
  j["initial"] = print_formula(tr.initial);
  j["final"] = print_formula(tr.result);
  j["steps"] = Json::array();
  for (auto& s : tr.steps) {
    Json step;
    step["rule"] = s.rule;
    step["path"] = s.path;
    step["before"] = print_formula(s.before);
    step["after"] = print_formula(s.after);
    step["witness_op"] = s.witness_op;
    j["steps"].push_back(std::move(step));
  }
  return j;
}

inline RewriteTrace trace_from_json(const Json& j) {
  RewriteTrace tr;
  tr.initial = parse_formula(j.at("initial").get<std::string>());
  tr.result = parse_formula(j.at("final").get<std::string>());
  for (auto& sj : j.at("steps")) {
    RewriteStep s;
    s.rule = sj.at("rule").get<std::string>();
    for (auto& e : sj.at("path")) s.path.push_back(e.get<int>());
    s.before = parse_formula(sj.at("before").get<std::string>());
    s.after = parse_formula(sj.at("after").get<std::string>());
    s.witness_op = sj.at("witness_op").get<std::string>();
    tr.steps.push_back(std::move(s));
  }
  return tr;
}

// R6 annotations travel inside the recorded witness op
// ("collapse w -> M; y:max; z:bound") so steps replay standalone.
inline std::vector<MonotoneAnnotation> annotations_from_witness_op(const std::string& op) {
  std::vector<MonotoneAnnotation> anns;
  size_t pos = op.find(';');
  while (pos != std::string::npos) {
    size_t start = pos + 1;
    size_t end = op.find(';', start);
    std::string item = op.substr(start, end == std::string::npos ? std::string::npos : end - start);
    size_t colon = item.find(':');
    if (colon != std::string::npos) {
      std::string var = item.substr(0, colon);
      std::string mode = item.substr(colon + 1);
      while (!var.empty() && var.front() == ' ') var.erase(var.begin());
      if (mode == "max") anns.push_back({var, true});
      else if (mode == "min") anns.push_back({var, false});
      // ":bound" entries need no annotation
    }
    pos = end;
  }
  return anns;
}

// Re-applies the named rule at the recorded path. Used by trace replay and
// by the model oracle to confirm a step is what it claims to be.
inline FormulaPtr apply_step_rule(const RewriteStep& s) {
  if (s.rule == "R1") return expand_definitions(s.before);
  if (s.rule == "R2") {
    FormulaPtr sub = formula_at(s.before, s.path);
    return replace_at(s.before, s.path, pull_standard_quantifiers(sub));
  }
  if (s.rule == "R3") return herbrandize_antecedent(s.before, s.path);
  if (s.rule == "R4") return drop_st(s.before, s.path);
  if (s.rule == "R5") return idealise(s.before, s.path);
  if (s.rule == "R6") return max_collapse(s.before, s.path, annotations_from_witness_op(s.witness_op));
  throw RewriteError("unknown rule " + s.rule);
}

// Trace composition: each step's before is the prior step's after and
// replaying every rule reproduces the recorded formulas exactly.
inline bool replay_trace(const RewriteTrace& tr, std::string* why = nullptr) {
  FormulaPtr cur = tr.initial;
  for (size_t i = 0; i < tr.steps.size(); ++i) {
    const RewriteStep& s = tr.steps[i];
    if (!formula_equal(cur, s.before)) {
      if (why) *why = "step " + std::to_string(i) + ": before does not chain";
      return false;
    }
    FormulaPtr re;
    try {
      re = apply_step_rule(s);
    } catch (const std::exception& e) {
      if (why) *why = "step " + std::to_string(i) + ": " + e.what();
      return false;
    }
    if (!formula_equal(re, s.after)) {
      if (why) *why = "step " + std::to_string(i) + ": rule does not reproduce after";
      return false;
    }
    cur = s.after;
  }
  if (!formula_equal(cur, tr.result)) {
    if (why) *why = "final formula does not match";
    return false;
  }
  return true;
}

}  // namespace nsa
