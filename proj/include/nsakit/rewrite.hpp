#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nsakit/formula.hpp"
#include "nsakit/parse.hpp"

namespace nsa {

struct RewriteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// User-supplied monotonicity facts. Upward: the matrix keeps holding when the
// named variable grows. The engine never infers these.
struct MonotoneAnnotation {
  std::string variable;
  bool upward = true;
};

struct RewriteStep {
  std::string rule;  // R1..R6
  Path path;
  FormulaPtr before;  // whole formula before the step
  FormulaPtr after;   // whole formula after the step
  std::string witness_op;
};

struct RewriteTrace {
  FormulaPtr initial;
  FormulaPtr result;
  std::vector<RewriteStep> steps;
};

// ---------------------------------------------------------------------------
// Fresh names

namespace detail {

inline std::string fresh_numbered(const std::string& stem, std::set<std::string>& used) {
  for (int i = 1;; ++i) {
    std::string cand = stem + std::to_string(i);
    if (!used.count(cand)) {
      used.insert(cand);
      return cand;
    }
  }
}

inline std::set<std::string> used_names(const FormulaPtr& f) {
  std::set<std::string> names;
  collect_all_names(f, names);
  for (auto& [n, ty] : free_vars(f)) names.insert(n);
  return names;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// R1 — resolve definitional sugar. ApproxReal(x,y) becomes the standard
// universal over the distance bound, ApproxBaire(f,g) pointwise equality on
// an initial segment index, inOmega relativizes over ~st. The bounded
// existential (exists y in w) is idealisation output, not input sugar, and
// passes through untouched.

inline FormulaPtr expand_definitions_named(const FormulaPtr& f, std::set<std::string>& used) {
  switch (f->kind) {
    case Formula::Kind::ApproxReal: {
      std::string n = detail::fresh_numbered("n", used);
      return f_quant(true, true, n, nat_type(),
                     f_rel("distLt", {f->terms[0], f->terms[1], t_var(n, nat_type())}));
    }
    case Formula::Kind::ApproxBaire: {
      std::string n = detail::fresh_numbered("n", used);
      TermPtr idx = t_var(n, nat_type());
      return f_quant(true, true, n, nat_type(),
                     f_rel("eq0", {t_app(f->terms[0], idx), t_app(f->terms[1], idx)}));
    }
    case Formula::Kind::InfiniteNat: {
      FormulaPtr body = expand_definitions_named(f->kids[0], used);
      return f_quant(true, false, f->var, nat_type(),
                     f_implies(f_not(f_st(t_var(f->var, nat_type()))), body));
    }
    default: {
      if (f->kids.empty()) return f;
      Formula out = *f;
      out.kids.clear();
      for (auto& k : f->kids) out.kids.push_back(expand_definitions_named(k, used));
      return mk_formula(std::move(out));
    }
  }
}

inline FormulaPtr expand_definitions(const FormulaPtr& f) {
  auto used = detail::used_names(f);
  return expand_definitions_named(f, used);
}

inline bool has_expandable_sugar(const FormulaPtr& f) {
  switch (f->kind) {
    case Formula::Kind::ApproxReal:
    case Formula::Kind::ApproxBaire:
    case Formula::Kind::InfiniteNat: return true;
    default: break;
  }
  for (auto& k : f->kids)
    if (has_expandable_sugar(k)) return true;
  return false;
}

// ---------------------------------------------------------------------------
// R2 — prenex moves for standard quantifiers, equivalences only. Phase one
// hoists without changing the quantifier flavor; phase two flips one
// antecedent/negation quantifier at a time, deepest first. Standard
// quantifiers never cross each other, and a standard existential never
// crosses an internal universal (that is idealisation's job).

namespace detail {

inline bool is_st_quant(const FormulaPtr& f) {
  return f->kind == Formula::Kind::Quant && f->standard;
}

// A single hoist of the standard quantifier sitting at child `i` of `f`.
inline std::optional<FormulaPtr> hoist_nonflip(const FormulaPtr& f) {
  using K = Formula::Kind;
  auto lift = [&](int i, const FormulaPtr& q) -> FormulaPtr {
    Formula inner = *f;
    inner.kids[i] = q->kids[0];
    return f_quant(q->forall, true, q->var, q->var_type, mk_formula(std::move(inner)));
  };
  switch (f->kind) {
    case K::And:
    case K::Or:
      for (int i = 0; i < 2; ++i)
        if (is_st_quant(f->kids[i])) return lift(i, f->kids[i]);
      return std::nullopt;
    case K::Implies:
      if (is_st_quant(f->kids[1])) return lift(1, f->kids[1]);
      return std::nullopt;
    case K::Quant: {
      if (f->standard) return std::nullopt;  // never reorder standard quantifiers
      const FormulaPtr& q = f->kids[0];
      if (is_st_quant(q) && q->forall == f->forall) return lift(0, q);
      return std::nullopt;
    }
    case K::InfiniteNat: {
      const FormulaPtr& q = f->kids[0];
      if (is_st_quant(q) && q->forall) return lift(0, q);
      return std::nullopt;
    }
    case K::ElemOfSeq: {
      const FormulaPtr& q = f->kids[0];
      if (is_st_quant(q) && !q->forall) return lift(0, q);
      return std::nullopt;
    }
    default: return std::nullopt;
  }
}

inline std::optional<FormulaPtr> hoist_flip(const FormulaPtr& f) {
  using K = Formula::Kind;
  if (f->kind == K::Implies && is_st_quant(f->kids[0])) {
    const FormulaPtr& q = f->kids[0];
    return f_quant(!q->forall, true, q->var, q->var_type, f_implies(q->kids[0], f->kids[1]));
  }
  if (f->kind == K::Not && is_st_quant(f->kids[0])) {
    const FormulaPtr& q = f->kids[0];
    return f_quant(!q->forall, true, q->var, q->var_type, f_not(q->kids[0]));
  }
  return std::nullopt;
}

inline std::optional<Path> find_move_preorder(const FormulaPtr& f, bool flips, Path base = {}) {
  if (!flips && hoist_nonflip(f)) return base;
  if (flips && hoist_flip(f)) return base;
  for (size_t i = 0; i < f->kids.size(); ++i) {
    Path p = base;
    p.push_back(static_cast<int>(i));
    if (auto r = find_move_preorder(f->kids[i], flips, p)) return r;
  }
  return std::nullopt;
}

// Deepest flip position; ties resolved by preorder.
inline void find_deepest_flip(const FormulaPtr& f, Path base, std::optional<Path>& best) {
  if (hoist_flip(f)) {
    if (!best || base.size() > best->size()) best = base;
  }
  for (size_t i = 0; i < f->kids.size(); ++i) {
    Path p = base;
    p.push_back(static_cast<int>(i));
    find_deepest_flip(f->kids[i], p, best);
  }
}

}  // namespace detail

inline FormulaPtr pull_standard_quantifiers(const FormulaPtr& f) {
  FormulaPtr cur = f;
  for (;;) {
    if (auto p = detail::find_move_preorder(cur, false)) {
      FormulaPtr sub = formula_at(cur, *p);
      cur = replace_at(cur, *p, *detail::hoist_nonflip(sub));
      continue;
    }
    std::optional<Path> flip;
    detail::find_deepest_flip(cur, {}, flip);
    if (!flip) break;
    FormulaPtr sub = formula_at(cur, *flip);
    cur = replace_at(cur, *flip, *detail::hoist_flip(sub));
  }
  return cur;
}

// ---------------------------------------------------------------------------
// R5 — idealisation. (forall x-block)(exists^st y-block : tau) phi with phi
// internal becomes (exists^st w:tau*)(forall x-block)(exists y in w)... phi.
// The y-block must share one type; one sequence bounds the whole block.

inline FormulaPtr idealise(const FormulaPtr& f, const Path& path) {
  FormulaPtr sub = formula_at(f, path);

  std::vector<FormulaPtr> universals;
  FormulaPtr cur = sub;
  while (cur->kind == Formula::Kind::Quant && cur->forall && !cur->standard) {
    universals.push_back(cur);
    cur = cur->kids[0];
  }
  if (universals.empty())
    throw RewriteError("idealise: path must address an internal universal block");

  std::vector<FormulaPtr> existentials;
  TypePtr tau;
  while (cur->kind == Formula::Kind::Quant && !cur->forall && cur->standard) {
    if (!tau) tau = cur->var_type;
    else if (!type_equal(tau, cur->var_type)) break;  // uniform-type run only
    existentials.push_back(cur);
    cur = cur->kids[0];
  }
  if (existentials.empty())
    throw RewriteError("idealise: no standard existential under the universal block");
  if (!is_internal(cur)) throw RewriteError("idealise: matrix is not internal");

  auto used = detail::used_names(f);
  std::string w = detail::fresh_numbered("w", used);
  TermPtr wvar = t_var(w, seq_type(tau));

  FormulaPtr body = cur;
  for (auto it = existentials.rbegin(); it != existentials.rend(); ++it)
    body = f_elem_of((*it)->var, tau, wvar, body);
  for (auto it = universals.rbegin(); it != universals.rend(); ++it)
    body = f_quant(true, false, (*it)->var, (*it)->var_type, body);
  FormulaPtr result = f_quant(false, true, w, seq_type(tau), body);
  return replace_at(f, path, result);
}

// ---------------------------------------------------------------------------
// R6 — collapse the idealisation sequence. Each variable bounded by w is
// either annotated monotone (substitute the collapsed bound M) or occurs only
// in the antecedent of the matrix implication, in which case the bounded
// existential turns into a bounded universal on the antecedent; that move is
// sound unconditionally.

namespace detail {

inline bool occurs_free_in(const FormulaPtr& f, const std::string& var) {
  auto fv = free_vars(f);
  return fv.count(var) > 0;
}

}  // namespace detail

inline FormulaPtr max_collapse(const FormulaPtr& f, const Path& path,
                               const std::vector<MonotoneAnnotation>& anns,
                               std::string* witness_out = nullptr) {
  FormulaPtr sub = formula_at(f, path);
  if (!(sub->kind == Formula::Kind::Quant && !sub->forall && sub->standard))
    throw RewriteError("max_collapse: path must address the idealisation existential");
  if (!is_seq(sub->var_type) || !is_nat(sub->var_type->a))
    throw RewriteError("max_collapse: element type not 0");
  const std::string w = sub->var;

  // Quantifier block between w and the bounded existentials stays in place.
  std::vector<FormulaPtr> prefix;
  FormulaPtr cur = sub->kids[0];
  while (cur->kind == Formula::Kind::Quant && !cur->standard) {
    prefix.push_back(cur);
    cur = cur->kids[0];
  }
  std::vector<FormulaPtr> bounded;
  while (cur->kind == Formula::Kind::ElemOfSeq && cur->terms[0]->kind == TermExpr::Kind::Var &&
         cur->terms[0]->name == w) {
    bounded.push_back(cur);
    cur = cur->kids[0];
  }
  if (bounded.empty()) throw RewriteError("max_collapse: no variable bounded by " + w);
  if (detail::occurs_free_in(cur, w))
    throw RewriteError("max_collapse: " + w + " occurs outside the bounded block");

  auto used = detail::used_names(f);
  std::string m = detail::fresh_numbered("M", used);
  TermPtr mvar = t_var(m, nat_type());

  auto find_ann = [&](const std::string& v) -> const MonotoneAnnotation* {
    for (auto& a : anns)
      if (a.variable == v) return &a;
    return nullptr;
  };

  std::string witness = "collapse " + w + " -> " + m;
  FormulaPtr body = cur;
  for (auto it = bounded.rbegin(); it != bounded.rend(); ++it) {
    const std::string& y = (*it)->var;
    if (const MonotoneAnnotation* a = find_ann(y)) {
      body = subst_formula(body, y, mvar);
      witness += "; " + y + (a->upward ? ":max" : ":min");
    } else if (body->kind == Formula::Kind::Implies && detail::occurs_free_in(body->kids[0], y) &&
               !detail::occurs_free_in(body->kids[1], y)) {
      FormulaPtr guard = f_rel("leq", {t_var(y, nat_type()), mvar});
      FormulaPtr bounded_univ =
          f_quant(true, false, y, nat_type(), f_implies(guard, body->kids[0]));
      body = f_implies(bounded_univ, body->kids[1]);
      witness += "; " + y + ":bound";
    } else {
      throw RewriteError("max_collapse: annotation missing for " + y);
    }
  }
  for (auto it = prefix.rbegin(); it != prefix.rend(); ++it)
    body = f_quant((*it)->forall, false, (*it)->var, (*it)->var_type, body);
  FormulaPtr result = f_quant(false, true, m, nat_type(), body);
  if (witness_out) *witness_out = witness;
  return replace_at(f, path, result);
}

// ---------------------------------------------------------------------------
// Normal forms: a block of standard universals, a block of standard
// existentials, then an internal matrix.

inline bool is_normal_form(const FormulaPtr& f) {
  FormulaPtr cur = f;
  while (cur->kind == Formula::Kind::Quant && cur->standard && cur->forall) cur = cur->kids[0];
  while (cur->kind == Formula::Kind::Quant && cur->standard && !cur->forall) cur = cur->kids[0];
  return is_internal(cur);
}

// First position violating the normal-form shape, for Stuck reports.
inline Path nf_violation(const FormulaPtr& f) {
  FormulaPtr cur = f;
  Path p;
  while (cur->kind == Formula::Kind::Quant && cur->standard && cur->forall) {
    p.push_back(0);
    cur = cur->kids[0];
  }
  while (cur->kind == Formula::Kind::Quant && cur->standard && !cur->forall) {
    p.push_back(0);
    cur = cur->kids[0];
  }
  // find the first external node inside the remainder
  std::function<bool(const FormulaPtr&, Path&)> find = [&](const FormulaPtr& g, Path& acc) -> bool {
    switch (g->kind) {
      case Formula::Kind::St:
      case Formula::Kind::ApproxReal:
      case Formula::Kind::ApproxBaire:
      case Formula::Kind::InfiniteNat:
      case Formula::Kind::ElemOfSeq: return true;
      case Formula::Kind::Quant:
        if (g->standard) return true;
        break;
      default: break;
    }
    for (size_t i = 0; i < g->kids.size(); ++i) {
      acc.push_back(static_cast<int>(i));
      if (find(g->kids[i], acc)) return true;
      acc.pop_back();
    }
    return false;
  };
  Path rest;
  if (find(cur, rest)) {
    for (int i : rest) p.push_back(i);
  }
  return p;
}

// ---------------------------------------------------------------------------
// R3 — Herbrandize a normal-form antecedent: each standard existential
// witness becomes a fresh standard function of the antecedent's universals.
// Sound as a weakening only at positively occurring implications.

inline FormulaPtr herbrandize_antecedent(const FormulaPtr& f, const Path& path,
                                         std::string* witness_out = nullptr) {
  FormulaPtr sub = formula_at(f, path);
  if (sub->kind != Formula::Kind::Implies)
    throw RewriteError("herbrandize: path must address an implication");
  if (!polarity_at(f, path))
    throw RewriteError("herbrandize: implication occurs negatively");
  FormulaPtr ante = sub->kids[0];
  if (!is_normal_form(ante)) throw RewriteError("herbrandize: antecedent is not a normal form");

  std::vector<FormulaPtr> univ, exis;
  FormulaPtr cur = ante;
  while (cur->kind == Formula::Kind::Quant && cur->standard && cur->forall) {
    univ.push_back(cur);
    cur = cur->kids[0];
  }
  while (cur->kind == Formula::Kind::Quant && cur->standard && !cur->forall) {
    exis.push_back(cur);
    cur = cur->kids[0];
  }
  if (exis.empty()) throw RewriteError("herbrandize: antecedent has no standard existential");

  auto used = detail::used_names(f);
  std::string witness = "herbrand";
  FormulaPtr matrix = cur;
  std::vector<std::pair<std::string, TypePtr>> funcs;
  for (auto& e : exis) {
    TypePtr gty = e->var_type;
    for (auto it = univ.rbegin(); it != univ.rend(); ++it)
      gty = arrow_type((*it)->var_type, gty);
    std::string g = detail::fresh_numbered("g", used);
    funcs.emplace_back(g, gty);
    TermPtr applied = t_var(g, gty);
    for (auto& u : univ) applied = t_app(applied, t_var(u->var, u->var_type));
    matrix = subst_formula(matrix, e->var, applied);
    witness += " " + g + "/" + e->var;
  }
  FormulaPtr new_ante = matrix;
  for (auto it = univ.rbegin(); it != univ.rend(); ++it)
    new_ante = f_quant(true, true, (*it)->var, (*it)->var_type, new_ante);
  FormulaPtr impl = f_implies(new_ante, sub->kids[1]);
  for (auto it = funcs.rbegin(); it != funcs.rend(); ++it)
    impl = f_quant(true, true, it->first, it->second, impl);
  if (witness_out) *witness_out = witness;
  return replace_at(f, path, impl);
}

// ---------------------------------------------------------------------------
// R4 — drop the standardness qualifier of a universal in negative position
// (the plain universal strengthens the antecedent, weakening the whole).

inline FormulaPtr drop_st(const FormulaPtr& f, const Path& path,
                          const MonotoneAnnotation* = nullptr) {
  FormulaPtr sub = formula_at(f, path);
  if (!(sub->kind == Formula::Kind::Quant && sub->forall && sub->standard))
    throw RewriteError("drop_st: path must address a standard universal");
  if (polarity_at(f, path))
    throw RewriteError("drop_st: quantifier occurs positively; dropping st would be unsound");
  return replace_at(f, path, f_quant(true, false, sub->var, sub->var_type, sub->kids[0]));
}

// ---------------------------------------------------------------------------
// The pipeline. R1 once; implications are consolidated innermost-first:
// both sides are normalized, the antecedent is herbrandized when it carries
// standard existentials, annotated universals that the herbrandization
// exposed lose their st, and standard quantifiers are pulled / idealised /
// collapsed at implication sides and at the root.

struct NormalizeResult {
  FormulaPtr formula;
  RewriteTrace trace;
  bool stuck = false;
  Path stuck_position;
};

namespace detail {

class Normalizer {
 public:
  Normalizer(FormulaPtr f, std::vector<MonotoneAnnotation> anns)
      : cur_(std::move(f)), anns_(std::move(anns)) {
    if (!bound_names_unique(cur_)) cur_ = alpha_normalize(cur_);
    trace_.initial = cur_;
  }

  NormalizeResult run() {
    if (has_expandable_sugar(cur_)) {
      FormulaPtr after = expand_definitions(cur_);
      record("R1", {}, after, "expand");
    }
    process({});
    consolidate({});
    NormalizeResult res;
    trace_.result = cur_;
    res.formula = cur_;
    res.trace = trace_;
    if (!is_normal_form(cur_)) {
      res.stuck = true;
      res.stuck_position = nf_violation(cur_);
    }
    return res;
  }

 private:
  FormulaPtr cur_;
  std::vector<MonotoneAnnotation> anns_;
  RewriteTrace trace_;

  void record(const std::string& rule, const Path& p, const FormulaPtr& after,
              const std::string& witness) {
    RewriteStep s;
    s.rule = rule;
    s.path = p;
    s.before = cur_;
    s.after = after;
    s.witness_op = witness;
    trace_.steps.push_back(s);
    cur_ = after;
  }

  bool annotated(const std::string& v) const {
    for (auto& a : anns_)
      if (a.variable == v) return true;
    return false;
  }

  void process(Path path) {
    FormulaPtr node = formula_at(cur_, path);
    switch (node->kind) {
      case Formula::Kind::Implies: {
        Path ante = path, cons = path;
        ante.push_back(0);
        cons.push_back(1);
        process(ante);
        process(cons);
        consolidate(ante);
        consolidate(cons);
        node = formula_at(cur_, path);
        FormulaPtr a = node->kids[0];
        // R3 applies when the normalized antecedent carries standard
        // existential witnesses and the implication occurs positively.
        bool has_exists = false;
        {
          FormulaPtr c = a;
          while (c->kind == Formula::Kind::Quant && c->standard && c->forall) c = c->kids[0];
          has_exists = c->kind == Formula::Kind::Quant && c->standard && !c->forall;
        }
        if (is_normal_form(a) && has_exists && polarity_at(cur_, path)) {
          std::string witness;
          FormulaPtr after = herbrandize_antecedent(cur_, path, &witness);
          record("R3", path, after, witness);
          // the implication moved below the introduced function quantifiers
          Path impl = path;
          FormulaPtr g = formula_at(cur_, path);
          while (g->kind == Formula::Kind::Quant) {
            impl.push_back(0);
            g = g->kids[0];
          }
          // R4: annotated standard universals leading the herbrandized antecedent
          Path q = impl;
          q.push_back(0);
          for (;;) {
            FormulaPtr lead = formula_at(cur_, q);
            if (!(lead->kind == Formula::Kind::Quant && lead->standard && lead->forall)) break;
            if (annotated(lead->var)) {
              FormulaPtr after4 = drop_st(cur_, q);
              record("R4", q, after4, "dropst " + lead->var);
            }
            q.push_back(0);
          }
        }
        return;
      }
      case Formula::Kind::Quant:
      case Formula::Kind::InfiniteNat:
      case Formula::Kind::ElemOfSeq: {
        Path p = path;
        p.push_back(0);
        process(p);
        return;
      }
      case Formula::Kind::And:
      case Formula::Kind::Or:
      case Formula::Kind::Not: {
        for (size_t i = 0; i < node->kids.size(); ++i) {
          Path p = path;
          p.push_back(static_cast<int>(i));
          process(p);
        }
        return;
      }
      default: return;
    }
  }

  // Finds the deepest junction (internal forall block immediately over a
  // standard existential) within the quantifier prefix at `path`.
  std::optional<Path> find_junction(const Path& path) {
    Path p = path;
    FormulaPtr c = formula_at(cur_, path);
    std::optional<Path> best;
    std::optional<Path> block_start;
    for (;;) {
      if (c->kind == Formula::Kind::Quant && !c->standard && c->forall) {
        if (!block_start) block_start = p;
      } else if (c->kind == Formula::Kind::Quant && c->standard && !c->forall) {
        if (block_start) best = block_start;
        block_start.reset();
      } else if (c->kind == Formula::Kind::Quant && c->standard && c->forall) {
        block_start.reset();
      } else {
        break;
      }
      p.push_back(0);
      c = c->kids[0];
    }
    return best;
  }

  void consolidate(const Path& path) {
    for (;;) {
      FormulaPtr sub = formula_at(cur_, path);
      FormulaPtr pulled = pull_standard_quantifiers(sub);
      if (!formula_equal(sub, pulled))
        record("R2", path, replace_at(cur_, path, pulled), "reorder");
      auto junction = find_junction(path);
      if (!junction) return;
      // R5 then R6 as a unit; an uncollapsible sequence leaves the formula
      // as it was before idealisation (Stuck is reported from the caller).
      FormulaPtr after5;
      try {
        after5 = idealise(cur_, *junction);
      } catch (const RewriteError&) {
        return;
      }
      std::string w5;
      {
        FormulaPtr q = formula_at(after5, *junction);
        w5 = "idealise " + q->var;
      }
      std::string w6;
      FormulaPtr after6;
      try {
        after6 = max_collapse(after5, *junction, anns_, &w6);
      } catch (const RewriteError&) {
        return;  // roll back both
      }
      record("R5", *junction, after5, w5);
      record("R6", *junction, after6, w6);
    }
  }
};

}  // namespace detail

inline NormalizeResult normalize(const FormulaPtr& f,
                                 const std::vector<MonotoneAnnotation>& anns = {}) {
  detail::Normalizer n(f, anns);
  return n.run();
}

}  // namespace nsa
