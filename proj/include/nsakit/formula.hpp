#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsakit/term.hpp"

namespace nsa {

// Formulas of the external language: internal relations over terms, the
// propositional connectives, quantifiers that may carry the standardness
// qualifier, the freestanding st(t) predicate, and the sugar forms that
// R1 resolves (x ~ y, f ~1 g, quantification over Omega) plus the bounded
// existential (exists y in w) that idealisation introduces.
struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  enum class Kind { Rel, Not, And, Or, Implies, Quant, St, ApproxReal, ApproxBaire, InfiniteNat, ElemOfSeq };
  Kind kind;
  std::string rel_name;        // Rel
  std::string var;             // Quant / InfiniteNat / ElemOfSeq binder
  bool forall = false;         // Quant
  bool standard = false;       // Quant
  TypePtr var_type;            // Quant / ElemOfSeq (element type)
  std::vector<TermPtr> terms;  // Rel args; St [t]; ApproxReal/Baire [x,y]; ElemOfSeq [seq]
  std::vector<FormulaPtr> kids;
};

inline FormulaPtr mk_formula(Formula f) { return std::make_shared<Formula>(std::move(f)); }

inline FormulaPtr f_rel(std::string name, std::vector<TermPtr> args) {
  Formula f;
  f.kind = Formula::Kind::Rel;
  f.rel_name = std::move(name);
  f.terms = std::move(args);
  return mk_formula(std::move(f));
}
inline FormulaPtr f_not(FormulaPtr a) {
  Formula f;
  f.kind = Formula::Kind::Not;
  f.kids = {std::move(a)};
  return mk_formula(std::move(f));
}
inline FormulaPtr f_binop(Formula::Kind k, FormulaPtr a, FormulaPtr b) {
  Formula f;
  f.kind = k;
  f.kids = {std::move(a), std::move(b)};
  return mk_formula(std::move(f));
}
inline FormulaPtr f_and(FormulaPtr a, FormulaPtr b) { return f_binop(Formula::Kind::And, std::move(a), std::move(b)); }
inline FormulaPtr f_or(FormulaPtr a, FormulaPtr b) { return f_binop(Formula::Kind::Or, std::move(a), std::move(b)); }
inline FormulaPtr f_implies(FormulaPtr a, FormulaPtr b) {
  return f_binop(Formula::Kind::Implies, std::move(a), std::move(b));
}
inline FormulaPtr f_quant(bool forall, bool standard, std::string v, TypePtr ty, FormulaPtr body) {
  Formula f;
  f.kind = Formula::Kind::Quant;
  f.forall = forall;
  f.standard = standard;
  f.var = std::move(v);
  f.var_type = std::move(ty);
  f.kids = {std::move(body)};
  return mk_formula(std::move(f));
}
inline FormulaPtr f_st(TermPtr t) {
  Formula f;
  f.kind = Formula::Kind::St;
  f.terms = {std::move(t)};
  return mk_formula(std::move(f));
}
inline FormulaPtr f_approx_real(TermPtr x, TermPtr y) {
  Formula f;
  f.kind = Formula::Kind::ApproxReal;
  f.terms = {std::move(x), std::move(y)};
  return mk_formula(std::move(f));
}
inline FormulaPtr f_approx_baire(TermPtr x, TermPtr y) {
  Formula f;
  f.kind = Formula::Kind::ApproxBaire;
  f.terms = {std::move(x), std::move(y)};
  return mk_formula(std::move(f));
}
inline FormulaPtr f_inf_nat(std::string v, FormulaPtr body) {
  Formula f;
  f.kind = Formula::Kind::InfiniteNat;
  f.var = std::move(v);
  f.var_type = nat_type();
  f.kids = {std::move(body)};
  return mk_formula(std::move(f));
}
inline FormulaPtr f_elem_of(std::string v, TypePtr elem_ty, TermPtr seq, FormulaPtr body) {
  Formula f;
  f.kind = Formula::Kind::ElemOfSeq;
  f.var = std::move(v);
  f.var_type = std::move(elem_ty);
  f.terms = {std::move(seq)};
  f.kids = {std::move(body)};
  return mk_formula(std::move(f));
}

inline bool is_binder(const Formula& f) {
  return f.kind == Formula::Kind::Quant || f.kind == Formula::Kind::InfiniteNat ||
         f.kind == Formula::Kind::ElemOfSeq;
}

// A formula is internal iff it contains no st node, no standard-qualified
// quantifier, and no sugar node.
inline bool is_internal(const FormulaPtr& f) {
  switch (f->kind) {
    case Formula::Kind::St:
    case Formula::Kind::ApproxReal:
    case Formula::Kind::ApproxBaire:
    case Formula::Kind::InfiniteNat:
    case Formula::Kind::ElemOfSeq: return false;
    case Formula::Kind::Quant:
      if (f->standard) return false;
      break;
    default: break;
  }
  for (auto& k : f->kids)
    if (!is_internal(k)) return false;
  return true;
}

enum class Classification { Internal, External };
inline Classification classify(const FormulaPtr& f) {
  return is_internal(f) ? Classification::Internal : Classification::External;
}

inline bool contains_sugar(const FormulaPtr& f) {
  switch (f->kind) {
    case Formula::Kind::ApproxReal:
    case Formula::Kind::ApproxBaire:
    case Formula::Kind::InfiniteNat:
    case Formula::Kind::ElemOfSeq: return true;
    default: break;
  }
  for (auto& k : f->kids)
    if (contains_sugar(k)) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Variables

inline void collect_free_vars(const FormulaPtr& f, std::set<std::string>& bound,
                              std::map<std::string, TypePtr>& out) {
  for (auto& t : f->terms) collect_term_vars(t, bound, out);
  if (is_binder(*f)) {
    bool added = bound.insert(f->var).second;
    for (auto& k : f->kids) collect_free_vars(k, bound, out);
    if (added) bound.erase(f->var);
    return;
  }
  for (auto& k : f->kids) collect_free_vars(k, bound, out);
}

inline std::map<std::string, TypePtr> free_vars(const FormulaPtr& f) {
  std::set<std::string> bound;
  std::map<std::string, TypePtr> out;
  collect_free_vars(f, bound, out);
  return out;
}

inline void collect_all_names(const FormulaPtr& f, std::set<std::string>& names) {
  if (is_binder(*f)) names.insert(f->var);
  std::function<void(const TermPtr&)> walk_term = [&](const TermPtr& t) {
    if (t->kind == TermExpr::Kind::Var || t->kind == TermExpr::Kind::Lam) names.insert(t->name);
    for (auto& k : t->kids) walk_term(k);
  };
  for (auto& t : f->terms) walk_term(t);
  for (auto& k : f->kids) collect_all_names(k, names);
}

inline std::string fresh_name(const std::string& stem, std::set<std::string>& used) {
  if (!used.count(stem)) {
    used.insert(stem);
    return stem;
  }
  for (int i = 2;; ++i) {
    std::string cand = stem + "_" + std::to_string(i);
    if (!used.count(cand)) {
      used.insert(cand);
      return cand;
    }
  }
}

// Substitutes a term for a free variable; bound names are unique after
// alpha normalization so shadowing is the only case to respect.
inline FormulaPtr subst_formula(const FormulaPtr& f, const std::string& var, const TermPtr& repl) {
  Formula out = *f;
  out.terms.clear();
  out.kids.clear();
  for (auto& t : f->terms) out.terms.push_back(subst_term(t, var, repl));
  if (is_binder(*f) && f->var == var) {
    out.kids = f->kids;
    return mk_formula(std::move(out));
  }
  for (auto& k : f->kids) out.kids.push_back(subst_formula(k, var, repl));
  return mk_formula(std::move(out));
}

// Renames every bound occurrence so that bound names are pairwise distinct
// and distinct from free names. Original names are kept when already unique.
inline FormulaPtr alpha_normalize(const FormulaPtr& f) {
  std::set<std::string> used;
  for (auto& [n, ty] : free_vars(f)) used.insert(n);

  std::function<TermPtr(const TermPtr&, std::map<std::string, std::string>&)> ren_term =
      [&](const TermPtr& t, std::map<std::string, std::string>& ren) -> TermPtr {
    if (t->kind == TermExpr::Kind::Var) {
      auto it = ren.find(t->name);
      if (it == ren.end()) return t;
      TermExpr out = *t;
      out.name = it->second;
      return mk_term(std::move(out));
    }
    if (t->kind == TermExpr::Kind::Lam) {
      std::string nn = fresh_name(t->name, used);
      auto saved = ren.count(t->name) ? std::optional<std::string>(ren[t->name]) : std::nullopt;
      ren[t->name] = nn;
      TermExpr out = *t;
      out.name = nn;
      out.kids = {ren_term(t->kids[0], ren)};
      if (saved) ren[t->name] = *saved;
      else ren.erase(t->name);
      return mk_term(std::move(out));
    }
    TermExpr out = *t;
    out.kids.clear();
    for (auto& k : t->kids) out.kids.push_back(ren_term(k, ren));
    return mk_term(std::move(out));
  };

  std::function<FormulaPtr(const FormulaPtr&, std::map<std::string, std::string>&)> walk =
      [&](const FormulaPtr& g, std::map<std::string, std::string>& ren) -> FormulaPtr {
    Formula out = *g;
    out.terms.clear();
    out.kids.clear();
    for (auto& t : g->terms) out.terms.push_back(ren_term(t, ren));
    if (is_binder(*g)) {
      std::string nn = fresh_name(g->var, used);
      auto saved = ren.count(g->var) ? std::optional<std::string>(ren[g->var]) : std::nullopt;
      ren[g->var] = nn;
      out.var = nn;
      for (auto& k : g->kids) out.kids.push_back(walk(k, ren));
      if (saved) ren[g->var] = *saved;
      else ren.erase(g->var);
      return mk_formula(std::move(out));
    }
    for (auto& k : g->kids) out.kids.push_back(walk(k, ren));
    return mk_formula(std::move(out));
  };

  std::map<std::string, std::string> ren;
  return walk(f, ren);
}

inline bool bound_names_unique(const FormulaPtr& f) {
  std::set<std::string> seen;
  bool ok = true;
  std::function<void(const FormulaPtr&)> walk = [&](const FormulaPtr& g) {
    if (is_binder(*g) && !seen.insert(g->var).second) ok = false;
    for (auto& k : g->kids) walk(k);
  };
  walk(f);
  if (!ok) return false;
  for (auto& [n, ty] : free_vars(f))
    if (seen.count(n)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Structural and alpha equality

inline bool formula_equal(const FormulaPtr& x, const FormulaPtr& y) {
  if (x.get() == y.get()) return true;
  if (x->kind != y->kind || x->rel_name != y->rel_name || x->var != y->var ||
      x->forall != y->forall || x->standard != y->standard)
    return false;
  if (x->terms.size() != y->terms.size() || x->kids.size() != y->kids.size()) return false;
  if (is_binder(*x) && !type_equal(x->var_type, y->var_type)) return false;
  for (size_t i = 0; i < x->terms.size(); ++i)
    if (!term_equal(x->terms[i], y->terms[i])) return false;
  for (size_t i = 0; i < x->kids.size(); ++i)
    if (!formula_equal(x->kids[i], y->kids[i])) return false;
  return true;
}

inline bool alpha_equal_term(const TermPtr& x, const TermPtr& y, std::map<std::string, std::string>& m) {
  if (x->kind != y->kind) return false;
  if (x->kind == TermExpr::Kind::Var) {
    auto it = m.find(x->name);
    return it != m.end() ? it->second == y->name : x->name == y->name;
  }
  if (x->kind == TermExpr::Kind::NumLit) return x->num == y->num;
  if (x->kind == TermExpr::Kind::Lam) {
    auto saved = m.count(x->name) ? std::optional<std::string>(m[x->name]) : std::nullopt;
    m[x->name] = y->name;
    bool ok = alpha_equal_term(x->kids[0], y->kids[0], m);
    if (saved) m[x->name] = *saved;
    else m.erase(x->name);
    return ok;
  }
  if (x->kids.size() != y->kids.size()) return false;
  for (size_t i = 0; i < x->kids.size(); ++i)
    if (!alpha_equal_term(x->kids[i], y->kids[i], m)) return false;
  return true;
}

inline bool alpha_equal_rec(const FormulaPtr& x, const FormulaPtr& y, std::map<std::string, std::string>& m) {
  if (x->kind != y->kind || x->rel_name != y->rel_name || x->forall != y->forall ||
      x->standard != y->standard)
    return false;
  if (x->terms.size() != y->terms.size() || x->kids.size() != y->kids.size()) return false;
  if (is_binder(*x)) {
    if (!type_equal(x->var_type, y->var_type)) return false;
    for (size_t i = 0; i < x->terms.size(); ++i)
      if (!alpha_equal_term(x->terms[i], y->terms[i], m)) return false;
    auto saved = m.count(x->var) ? std::optional<std::string>(m[x->var]) : std::nullopt;
    m[x->var] = y->var;
    bool ok = alpha_equal_rec(x->kids[0], y->kids[0], m);
    if (saved) m[x->var] = *saved;
    else m.erase(x->var);
    return ok;
  }
  for (size_t i = 0; i < x->terms.size(); ++i)
    if (!alpha_equal_term(x->terms[i], y->terms[i], m)) return false;
  for (size_t i = 0; i < x->kids.size(); ++i)
    if (!alpha_equal_rec(x->kids[i], y->kids[i], m)) return false;
  return true;
}

inline bool alpha_equal(const FormulaPtr& x, const FormulaPtr& y) {
  std::map<std::string, std::string> m;
  return alpha_equal_rec(x, y, m);
}

// ---------------------------------------------------------------------------
// Paths address formula children (terms are opaque to the rewrite engine).

using Path = std::vector<int>;

inline FormulaPtr formula_at(const FormulaPtr& f, const Path& p) {
  FormulaPtr cur = f;
  for (int i : p) {
    if (i < 0 || static_cast<size_t>(i) >= cur->kids.size())
      throw std::out_of_range("path does not address a subformula");
    cur = cur->kids[i];
  }
  return cur;
}

inline FormulaPtr replace_at(const FormulaPtr& f, const Path& p, const FormulaPtr& repl, size_t depth = 0) {
  if (depth == p.size()) return repl;
  int i = p[depth];
  if (i < 0 || static_cast<size_t>(i) >= f->kids.size())
    throw std::out_of_range("path does not address a subformula");
  Formula out = *f;
  out.kids[i] = replace_at(f->kids[i], p, repl, depth + 1);
  return mk_formula(std::move(out));
}

// Polarity of the position reached by `p`: true = positive. Negation and the
// antecedent side of an implication flip.
inline bool polarity_at(const FormulaPtr& f, const Path& p) {
  bool pos = true;
  FormulaPtr cur = f;
  for (int i : p) {
    if (cur->kind == Formula::Kind::Not) pos = !pos;
    if (cur->kind == Formula::Kind::Implies && i == 0) pos = !pos;
    cur = cur->kids[i];
  }
  return pos;
}

// ---------------------------------------------------------------------------
// Printing. Precedences: -> (right assoc, lowest), |, &, unary. A binder's
// body extends maximally to the right, so binders in argument position are
// parenthesized.

inline std::string formula_to_string(const FormulaPtr& f, int prec = 0);

inline std::string binder_prefix(const Formula& f) {
  if (f.kind == Formula::Kind::Quant) {
    std::string s = "(";
    s += f.forall ? "forall" : "exists";
    if (f.standard) s += "^st";
    s += " " + f.var + ":" + type_to_string(f.var_type) + ")";
    return s;
  }
  if (f.kind == Formula::Kind::InfiniteNat) return "inOmega(" + f.var + ")";
  // ElemOfSeq
  return "(exists " + f.var + " in " + term_to_string(f.terms[0]) + ")";
}

inline std::string formula_to_string(const FormulaPtr& f, int prec) {
  auto wrap = [&](const std::string& s, int myprec) {
    return prec > myprec ? "(" + s + ")" : s;
  };
  switch (f->kind) {
    case Formula::Kind::Rel: {
      std::string s = f->rel_name + "(";
      for (size_t i = 0; i < f->terms.size(); ++i) {
        if (i) s += ", ";
        s += term_to_string(f->terms[i]);
      }
      return s + ")";
    }
    case Formula::Kind::St: return "st(" + term_to_string(f->terms[0]) + ")";
    case Formula::Kind::ApproxReal:
      return "approxR(" + term_to_string(f->terms[0]) + ", " + term_to_string(f->terms[1]) + ")";
    case Formula::Kind::ApproxBaire:
      return "approx1(" + term_to_string(f->terms[0]) + ", " + term_to_string(f->terms[1]) + ")";
    case Formula::Kind::Not: return wrap("~" + formula_to_string(f->kids[0], 3), 3);
    case Formula::Kind::And:
      return wrap(formula_to_string(f->kids[0], 2) + " & " + formula_to_string(f->kids[1], 3), 2);
    case Formula::Kind::Or:
      return wrap(formula_to_string(f->kids[0], 1) + " | " + formula_to_string(f->kids[1], 2), 1);
    case Formula::Kind::Implies:
      return wrap(formula_to_string(f->kids[0], 1) + " -> " + formula_to_string(f->kids[1], 0), 0);
    case Formula::Kind::Quant:
    case Formula::Kind::InfiniteNat:
    case Formula::Kind::ElemOfSeq:
      return wrap(binder_prefix(*f) + " " + formula_to_string(f->kids[0], 0), 0);
  }
  return "?";
}

inline std::string print_formula(const FormulaPtr& f) { return formula_to_string(f, 0); }

}  // namespace nsa
