#pragma once

#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsakit/rational.hpp"
#include "nsakit/types.hpp"

namespace nsa {

struct TypeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Terms of the finite-type calculus: variables, application, lambda,
// numerals with successor, the primitive recursor, and finite sequences
// with length/projection/append/max.
struct TermExpr;
using TermPtr = std::shared_ptr<const TermExpr>;

struct TermExpr {
  enum class Kind { Var, App, Lam, NumLit, Succ, Rec, SeqLit, SeqLen, SeqGet, SeqAppend, MaxOf };
  Kind kind;
  std::string name;           // Var / Lam binder
  TypePtr ty;                 // Var: its type; Lam: binder type (resolved after checking)
  BigNat num;                 // NumLit
  std::vector<TermPtr> kids;  // App [fun,arg]; Lam [body]; Succ [t]; Rec [base,step];
                              // SeqLit elems; SeqLen [s]; SeqGet [s,i]; SeqAppend [s,e]; MaxOf [s]
};

inline TermPtr mk_term(TermExpr t) { return std::make_shared<TermExpr>(std::move(t)); }

inline TermPtr t_var(std::string n, TypePtr ty = nullptr) {
  TermExpr t;
  t.kind = TermExpr::Kind::Var;
  t.name = std::move(n);
  t.ty = std::move(ty);
  return mk_term(std::move(t));
}
inline TermPtr t_app(TermPtr f, TermPtr a) {
  TermExpr t;
  t.kind = TermExpr::Kind::App;
  t.kids = {std::move(f), std::move(a)};
  return mk_term(std::move(t));
}
inline TermPtr t_lam(std::string v, TypePtr ty, TermPtr body) {
  TermExpr t;
  t.kind = TermExpr::Kind::Lam;
  t.name = std::move(v);
  t.ty = std::move(ty);
  t.kids = {std::move(body)};
  return mk_term(std::move(t));
}
inline TermPtr t_num(BigNat n) {
  TermExpr t;
  t.kind = TermExpr::Kind::NumLit;
  t.num = std::move(n);
  return mk_term(std::move(t));
}
inline TermPtr t_succ(TermPtr a) {
  TermExpr t;
  t.kind = TermExpr::Kind::Succ;
  t.kids = {std::move(a)};
  return mk_term(std::move(t));
}
inline TermPtr t_rec(TermPtr base, TermPtr step) {
  TermExpr t;
  t.kind = TermExpr::Kind::Rec;
  t.kids = {std::move(base), std::move(step)};
  return mk_term(std::move(t));
}
inline TermPtr t_seq(std::vector<TermPtr> elems) {
  TermExpr t;
  t.kind = TermExpr::Kind::SeqLit;
  t.kids = std::move(elems);
  return mk_term(std::move(t));
}
inline TermPtr t_len(TermPtr s) {
  TermExpr t;
  t.kind = TermExpr::Kind::SeqLen;
  t.kids = {std::move(s)};
  return mk_term(std::move(t));
}
inline TermPtr t_get(TermPtr s, TermPtr i) {
  TermExpr t;
  t.kind = TermExpr::Kind::SeqGet;
  t.kids = {std::move(s), std::move(i)};
  return mk_term(std::move(t));
}
inline TermPtr t_append(TermPtr s, TermPtr e) {
  TermExpr t;
  t.kind = TermExpr::Kind::SeqAppend;
  t.kids = {std::move(s), std::move(e)};
  return mk_term(std::move(t));
}
inline TermPtr t_maxof(TermPtr s) {
  TermExpr t;
  t.kind = TermExpr::Kind::MaxOf;
  t.kids = {std::move(s)};
  return mk_term(std::move(t));
}

// ---------------------------------------------------------------------------
// Type inference with metavariables. Quantifier annotations are optional in
// the surface syntax and free variables carry no declaration, so types are
// reconstructed by unification; unconstrained metavariables default to 0.

struct InferType;
using ITy = std::shared_ptr<InferType>;

struct InferType {
  enum class Kind { Nat, Arrow, Seq, Meta };
  Kind kind;
  ITy a, b;
  ITy link;  // Meta only: union-find forwarding
  int id = 0;
};

inline ITy it_nat() {
  auto t = std::make_shared<InferType>();
  t->kind = InferType::Kind::Nat;
  return t;
}
inline ITy it_arrow(ITy x, ITy y) {
  auto t = std::make_shared<InferType>();
  t->kind = InferType::Kind::Arrow;
  t->a = std::move(x);
  t->b = std::move(y);
  return t;
}
inline ITy it_seq(ITy x) {
  auto t = std::make_shared<InferType>();
  t->kind = InferType::Kind::Seq;
  t->a = std::move(x);
  return t;
}

struct TypeInference {
  int next_meta = 0;

  ITy fresh() {
    auto t = std::make_shared<InferType>();
    t->kind = InferType::Kind::Meta;
    t->id = next_meta++;
    return t;
  }

  ITy from_fin(const TypePtr& t) {
    if (!t) return fresh();
    switch (t->kind) {
      case FinType::Kind::Nat: return it_nat();
      case FinType::Kind::Arrow: return it_arrow(from_fin(t->a), from_fin(t->b));
      case FinType::Kind::Seq: return it_seq(from_fin(t->a));
    }
    return it_nat();
  }

  static ITy find(ITy t) {
    while (t->kind == InferType::Kind::Meta && t->link) t = t->link;
    return t;
  }

  static bool occurs(const ITy& meta, ITy t) {
    t = find(t);
    if (t.get() == meta.get()) return true;
    if (t->a && occurs(meta, t->a)) return true;
    if (t->b && occurs(meta, t->b)) return true;
    return false;
  }

  void unify(ITy x, ITy y, const std::string& where) {
    x = find(x);
    y = find(y);
    if (x.get() == y.get()) return;
    if (x->kind == InferType::Kind::Meta) {
      if (occurs(x, y)) throw TypeError("cyclic type in " + where);
      x->link = y;
      return;
    }
    if (y->kind == InferType::Kind::Meta) {
      unify(y, x, where);
      return;
    }
    if (x->kind != y->kind) throw TypeError("type mismatch in " + where);
    if (x->kind == InferType::Kind::Arrow) {
      unify(x->a, y->a, where);
      unify(x->b, y->b, where);
    } else if (x->kind == InferType::Kind::Seq) {
      unify(x->a, y->a, where);
    }
  }

  // Unresolved metavariables default to type 0.
  TypePtr resolve(ITy t) {
    t = find(t);
    switch (t->kind) {
      case InferType::Kind::Meta: return nat_type();
      case InferType::Kind::Nat: return nat_type();
      case InferType::Kind::Arrow: return arrow_type(resolve(t->a), resolve(t->b));
      case InferType::Kind::Seq: return seq_type(resolve(t->a));
    }
    return nat_type();
  }
};

// Deterministic checker for already-annotated terms: recomputes the unique
// type or throws. `env` types the free variables.
inline TypePtr type_of_term(const TermPtr& t, std::map<std::string, TypePtr> env) {
  using K = TermExpr::Kind;
  switch (t->kind) {
    case K::Var: {
      auto it = env.find(t->name);
      if (it != env.end()) return it->second;
      if (t->ty) return t->ty;
      throw TypeError("untyped free variable " + t->name);
    }
    case K::App: {
      TypePtr tf = type_of_term(t->kids[0], env);
      TypePtr ta = type_of_term(t->kids[1], env);
      if (!is_arrow(tf) || !type_equal(tf->a, ta)) throw TypeError("ill-typed application");
      return tf->b;
    }
    case K::Lam: {
      if (!t->ty) throw TypeError("lambda binder lacks a type");
      env[t->name] = t->ty;
      return arrow_type(t->ty, type_of_term(t->kids[0], env));
    }
    case K::NumLit: return nat_type();
    case K::Succ: {
      if (!is_nat(type_of_term(t->kids[0], env))) throw TypeError("succ expects 0");
      return nat_type();
    }
    case K::Rec: {
      TypePtr sigma = type_of_term(t->kids[0], env);
      TypePtr step = type_of_term(t->kids[1], env);
      TypePtr want = arrow_type(nat_type(), arrow_type(sigma, sigma));
      if (!type_equal(step, want)) throw TypeError("rec step must have type 0->sigma->sigma");
      return arrow_type(nat_type(), sigma);
    }
    case K::SeqLit: {
      if (t->kids.empty()) throw TypeError("empty sequence literal has no element type");
      TypePtr elem = type_of_term(t->kids[0], env);
      for (size_t i = 1; i < t->kids.size(); ++i)
        if (!type_equal(elem, type_of_term(t->kids[i], env)))
          throw TypeError("sequence literal elements must share one type");
      return seq_type(elem);
    }
    case K::SeqLen: {
      if (!is_seq(type_of_term(t->kids[0], env))) throw TypeError("len expects a sequence");
      return nat_type();
    }
    case K::SeqGet: {
      TypePtr s = type_of_term(t->kids[0], env);
      if (!is_seq(s)) throw TypeError("get expects a sequence");
      if (!is_nat(type_of_term(t->kids[1], env))) throw TypeError("get index must be 0");
      return s->a;
    }
    case K::SeqAppend: {
      TypePtr s = type_of_term(t->kids[0], env);
      if (!is_seq(s)) throw TypeError("append expects a sequence");
      if (!type_equal(s->a, type_of_term(t->kids[1], env))) throw TypeError("append element type mismatch");
      return s;
    }
    case K::MaxOf: {
      TypePtr s = type_of_term(t->kids[0], env);
      if (!is_seq(s) || !is_nat(s->a)) throw TypeError("maxof applies only to 0*");
      return nat_type();
    }
  }
  throw TypeError("unreachable term kind");
}

inline void collect_term_vars(const TermPtr& t, std::set<std::string>& bound_here,
                              std::map<std::string, TypePtr>& free_out) {
  using K = TermExpr::Kind;
  if (t->kind == K::Var) {
    if (!bound_here.count(t->name)) free_out.emplace(t->name, t->ty);
    return;
  }
  if (t->kind == K::Lam) {
    bool added = bound_here.insert(t->name).second;
    collect_term_vars(t->kids[0], bound_here, free_out);
    if (added) bound_here.erase(t->name);
    return;
  }
  for (auto& k : t->kids) collect_term_vars(k, bound_here, free_out);
}

// Capture is avoided by the caller keeping bound names unique (the alpha
// normalization invariant); substitution stops at shadowing binders.
inline TermPtr subst_term(const TermPtr& t, const std::string& var, const TermPtr& repl) {
  using K = TermExpr::Kind;
  if (t->kind == K::Var) return t->name == var ? repl : t;
  if (t->kind == K::Lam && t->name == var) return t;
  TermExpr out = *t;
  out.kids.clear();
  for (auto& k : t->kids) out.kids.push_back(subst_term(k, var, repl));
  return mk_term(std::move(out));
}

inline bool term_equal(const TermPtr& x, const TermPtr& y) {
  if (x.get() == y.get()) return true;
  if (x->kind != y->kind) return false;
  if (x->kind == TermExpr::Kind::Var) return x->name == y->name;
  if (x->kind == TermExpr::Kind::NumLit) return x->num == y->num;
  if (x->kind == TermExpr::Kind::Lam && x->name != y->name) return false;
  if (x->kids.size() != y->kids.size()) return false;
  for (size_t i = 0; i < x->kids.size(); ++i)
    if (!term_equal(x->kids[i], y->kids[i])) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Printing. Application is juxtaposition (left associative); lambda extends
// maximally to the right.

inline std::string term_to_string(const TermPtr& t, bool atom_pos = false);

inline std::string term_args(const std::vector<TermPtr>& kids) {
  std::string s;
  for (size_t i = 0; i < kids.size(); ++i) {
    if (i) s += ", ";
    s += term_to_string(kids[i]);
  }
  return s;
}

inline std::string term_to_string(const TermPtr& t, bool atom_pos) {
  using K = TermExpr::Kind;
  switch (t->kind) {
    case K::Var: return t->name;
    case K::NumLit: return t->num.str();
    case K::App: {
      std::string fun = term_to_string(t->kids[0], false);
      if (t->kids[0]->kind == K::Lam) fun = "(" + fun + ")";
      std::string arg = term_to_string(t->kids[1], true);
      std::string s = fun + " " + arg;
      return atom_pos ? "(" + s + ")" : s;
    }
    case K::Lam: {
      std::string s = "\\" + t->name + ":" + type_to_string(t->ty) + ". " + term_to_string(t->kids[0]);
      return atom_pos ? "(" + s + ")" : s;
    }
    case K::Succ: return "succ(" + term_to_string(t->kids[0]) + ")";
    case K::Rec: return "rec(" + term_args(t->kids) + ")";
    case K::SeqLit: return "<" + term_args(t->kids) + ">";
    case K::SeqLen: return "len(" + term_to_string(t->kids[0]) + ")";
    case K::SeqGet: return "get(" + term_args(t->kids) + ")";
    case K::SeqAppend: return "append(" + term_args(t->kids) + ")";
    case K::MaxOf: return "maxof(" + term_to_string(t->kids[0]) + ")";
  }
  return "?";
}

}  // namespace nsa
