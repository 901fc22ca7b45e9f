#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nsakit/formula.hpp"

namespace nsa {

struct ParseError : std::runtime_error {
  int line, col;
  ParseError(const std::string& msg, int l, int c)
      : std::runtime_error("parse error at " + std::to_string(l) + ":" + std::to_string(c) + ": " + msg),
        line(l),
        col(c) {}
};

// ---------------------------------------------------------------------------
// Lexer

struct Token {
  enum class Kind { Ident, Num, LParen, RParen, Comma, Colon, Dot, Arrow, Star, StMark, Amp, Pipe, Tilde, Lambda, Lt, Gt, End };
  Kind kind;
  std::string text;
  BigNat num;
  int line = 1, col = 1;
};

inline std::vector<Token> lex(const std::string& src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  size_t i = 0;
  auto push = [&](Token::Kind k, std::string text, int l, int c) {
    Token t;
    t.kind = k;
    t.text = std::move(text);
    t.line = l;
    t.col = c;
    out.push_back(std::move(t));
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == '\n') {
      ++line;
      col = 1;
      ++i;
      continue;
    }
    if (c == '#') {  // comment to end of line
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++col;
      ++i;
      continue;
    }
    int l = line, cl = col;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_' || src[j] == '\''))
        ++j;
      push(Token::Kind::Ident, src.substr(i, j - i), l, cl);
      col += static_cast<int>(j - i);
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t j = i;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      Token t;
      t.kind = Token::Kind::Num;
      t.text = src.substr(i, j - i);
      t.num = BigNat(t.text);
      t.line = l;
      t.col = cl;
      out.push_back(std::move(t));
      col += static_cast<int>(j - i);
      i = j;
      continue;
    }
    if (c == '-' && i + 1 < src.size() && src[i + 1] == '>') {
      push(Token::Kind::Arrow, "->", l, cl);
      i += 2;
      col += 2;
      continue;
    }
    if (c == '^') {
      if (src.compare(i, 3, "^st") == 0) {
        push(Token::Kind::StMark, "^st", l, cl);
        i += 3;
        col += 3;
        continue;
      }
      throw ParseError("stray '^' (expected ^st)", l, cl);
    }
    switch (c) {
      case '(': push(Token::Kind::LParen, "(", l, cl); break;
      case ')': push(Token::Kind::RParen, ")", l, cl); break;
      case ',': push(Token::Kind::Comma, ",", l, cl); break;
      case ':': push(Token::Kind::Colon, ":", l, cl); break;
      case '.': push(Token::Kind::Dot, ".", l, cl); break;
      case '*': push(Token::Kind::Star, "*", l, cl); break;
      case '&': push(Token::Kind::Amp, "&", l, cl); break;
      case '|': push(Token::Kind::Pipe, "|", l, cl); break;
      case '~': push(Token::Kind::Tilde, "~", l, cl); break;
      case '\\': push(Token::Kind::Lambda, "\\", l, cl); break;
      case '<': push(Token::Kind::Lt, "<", l, cl); break;
      case '>': push(Token::Kind::Gt, ">", l, cl); break;
      default: throw ParseError(std::string("unexpected character '") + c + "'", l, cl);
    }
    ++i;
    ++col;
  }
  Token end;
  end.kind = Token::Kind::End;
  end.line = line;
  end.col = col;
  out.push_back(std::move(end));
  return out;
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  explicit Parser(std::string src) : toks_(lex(src)) {}

  FormulaPtr formula() {
    FormulaPtr f = impl();
    return f;
  }

  TermPtr term_only() {
    TermPtr t = term();
    expect(Token::Kind::End, "end of input after term");
    return t;
  }

  FormulaPtr formula_only() {
    FormulaPtr f = impl();
    expect(Token::Kind::End, "end of input after formula");
    return f;
  }

 private:
  std::vector<Token> toks_;
  size_t pos_ = 0;

  const Token& peek(size_t ahead = 0) const {
    size_t i = pos_ + ahead;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool at(Token::Kind k) const { return peek().kind == k; }
  bool at_ident(const char* s) const { return at(Token::Kind::Ident) && peek().text == s; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, peek().line, peek().col);
  }
  const Token& expect(Token::Kind k, const std::string& what) {
    if (!at(k)) fail("expected " + what);
    return next();
  }

  static bool reserved(const std::string& s) {
    static const std::set<std::string> kw = {"forall", "exists", "in",     "st",  "approxR",
                                             "approx1", "inOmega", "succ", "rec", "len",
                                             "get",     "append",  "maxof"};
    return kw.count(s) > 0;
  }

  // types -------------------------------------------------------------------
  TypePtr type_atom() {
    if (at(Token::Kind::Num)) {
      BigNat n = next().num;
      if (n > 8) fail("pure-type shorthand out of range");
      return pure_type(static_cast<unsigned>(n));
    }
    if (at(Token::Kind::LParen)) {
      next();
      TypePtr t = type();
      expect(Token::Kind::RParen, "')' in type");
      return t;
    }
    fail("expected a type");
  }
  TypePtr type_postfix() {
    TypePtr t = type_atom();
    while (at(Token::Kind::Star)) {
      next();
      t = seq_type(t);
    }
    return t;
  }
  TypePtr type() {
    TypePtr t = type_postfix();
    if (at(Token::Kind::Arrow)) {
      next();
      return arrow_type(t, type());
    }
    return t;
  }

  // terms -------------------------------------------------------------------
  TermPtr term() {
    if (at(Token::Kind::Lambda)) {
      next();
      std::string v = expect(Token::Kind::Ident, "lambda binder").text;
      if (reserved(v)) fail("reserved word '" + v + "' cannot bind");
      TypePtr ty;
      if (at(Token::Kind::Colon)) {
        next();
        ty = type();
      }
      expect(Token::Kind::Dot, "'.' after lambda binder");
      return t_lam(v, ty, term());
    }
    TermPtr t = term_primary();
    while (term_starts()) t = t_app(t, term_primary());
    return t;
  }

  bool term_starts() const {
    switch (peek().kind) {
      case Token::Kind::Num:
      case Token::Kind::LParen:
      case Token::Kind::Lt: return true;
      case Token::Kind::Ident: return true;
      default: return false;
    }
  }

  TermPtr builtin_call(const std::string& name) {
    expect(Token::Kind::LParen, "'(' after " + name);
    std::vector<TermPtr> args;
    if (!at(Token::Kind::RParen)) {
      args.push_back(term());
      while (at(Token::Kind::Comma)) {
        next();
        args.push_back(term());
      }
    }
    expect(Token::Kind::RParen, "')' closing " + name);
    auto want = [&](size_t n) {
      if (args.size() != n) fail(name + " takes " + std::to_string(n) + " argument(s)");
    };
    if (name == "succ") {
      want(1);
      return t_succ(args[0]);
    }
    if (name == "rec") {
      want(2);
      return t_rec(args[0], args[1]);
    }
    if (name == "len") {
      want(1);
      return t_len(args[0]);
    }
    if (name == "get") {
      want(2);
      return t_get(args[0], args[1]);
    }
    if (name == "append") {
      want(2);
      return t_append(args[0], args[1]);
    }
    want(1);
    return t_maxof(args[0]);  // maxof
  }

  TermPtr term_primary() {
    if (at(Token::Kind::Num)) return t_num(next().num);
    if (at(Token::Kind::Lt)) {
      next();
      std::vector<TermPtr> elems;
      elems.push_back(term());
      while (at(Token::Kind::Comma)) {
        next();
        elems.push_back(term());
      }
      expect(Token::Kind::Gt, "'>' closing sequence literal");
      return t_seq(std::move(elems));
    }
    if (at(Token::Kind::LParen)) {
      next();
      TermPtr t = term();
      expect(Token::Kind::RParen, "')' in term");
      return t;
    }
    if (at(Token::Kind::Ident)) {
      std::string name = peek().text;
      if (name == "succ" || name == "rec" || name == "len" || name == "get" || name == "append" ||
          name == "maxof") {
        next();
        return builtin_call(name);
      }
      if (reserved(name)) fail("reserved word '" + name + "' in term position");
      next();
      return t_var(name);
    }
    fail("expected a term");
  }

  // formulas ----------------------------------------------------------------
  FormulaPtr impl() {
    FormulaPtr a = disj();
    if (at(Token::Kind::Arrow)) {
      next();
      return f_implies(a, impl());
    }
    return a;
  }
  FormulaPtr disj() {
    FormulaPtr a = conj();
    while (at(Token::Kind::Pipe)) {
      next();
      a = f_or(a, conj());
    }
    return a;
  }
  FormulaPtr conj() {
    FormulaPtr a = unary();
    while (at(Token::Kind::Amp)) {
      next();
      a = f_and(a, unary());
    }
    return a;
  }

  FormulaPtr unary() {
    if (at(Token::Kind::Tilde)) {
      next();
      return f_not(unary());
    }
    if (at(Token::Kind::LParen) && peek(1).kind == Token::Kind::Ident &&
        (peek(1).text == "forall" || peek(1).text == "exists")) {
      return binder();
    }
    return atom();
  }

  FormulaPtr binder() {
    expect(Token::Kind::LParen, "'('");
    bool forall = next().text == "forall";
    bool standard = false;
    if (at(Token::Kind::StMark)) {
      next();
      standard = true;
    }
    std::string v = expect(Token::Kind::Ident, "quantified variable").text;
    if (reserved(v)) fail("reserved word '" + v + "' cannot be quantified");
    if (at_ident("in")) {
      if (standard) fail("'^st' does not combine with 'in'");
      if (forall) fail("bounded quantification supports 'exists' only");
      next();
      TermPtr seq = term();
      expect(Token::Kind::RParen, "')' closing bounded quantifier");
      FormulaPtr body = body_formula();
      return f_elem_of(v, nullptr, seq, body);
    }
    TypePtr ty;
    if (at(Token::Kind::Colon)) {
      next();
      ty = type();
    }
    expect(Token::Kind::RParen, "')' closing quantifier");
    FormulaPtr body = body_formula();
    return f_quant(forall, standard, v, ty, body);
  }

  FormulaPtr body_formula() {
    if (at(Token::Kind::End)) fail("missing body");
    return impl();
  }

  FormulaPtr atom() {
    if (at(Token::Kind::LParen)) {
      next();
      FormulaPtr f = impl();
      expect(Token::Kind::RParen, "')'");
      return f;
    }
    if (!at(Token::Kind::Ident)) fail("expected a formula");
    std::string name = next().text;
    if (name == "st") {
      expect(Token::Kind::LParen, "'(' after st");
      TermPtr t = term();
      expect(Token::Kind::RParen, "')' closing st");
      return f_st(t);
    }
    if (name == "approxR" || name == "approx1") {
      expect(Token::Kind::LParen, "'(' after " + name);
      TermPtr x = term();
      expect(Token::Kind::Comma, "',' in " + name);
      TermPtr y = term();
      expect(Token::Kind::RParen, "')' closing " + name);
      return name == "approxR" ? f_approx_real(x, y) : f_approx_baire(x, y);
    }
    if (name == "inOmega") {
      expect(Token::Kind::LParen, "'(' after inOmega");
      std::string v = expect(Token::Kind::Ident, "variable in inOmega").text;
      if (reserved(v)) fail("reserved word '" + v + "' cannot bind");
      expect(Token::Kind::RParen, "')' closing inOmega");
      FormulaPtr body = body_formula();
      return f_inf_nat(v, body);
    }
    if (reserved(name)) fail("reserved word '" + name + "' in formula position");
    expect(Token::Kind::LParen, "'(' after relation " + name);
    std::vector<TermPtr> args;
    if (!at(Token::Kind::RParen)) {
      args.push_back(term());
      while (at(Token::Kind::Comma)) {
        next();
        args.push_back(term());
      }
    }
    expect(Token::Kind::RParen, "')' closing relation " + name);
    return f_rel(name, std::move(args));
  }
};

// ---------------------------------------------------------------------------
// (forall x)(st(x) -> A) and (exists x)(st(x) & A) normalize to qualified
// quantifiers when the guard is syntactically immediate.

inline FormulaPtr normalize_st_guards(const FormulaPtr& f) {
  Formula out = *f;
  out.kids.clear();
  for (auto& k : f->kids) out.kids.push_back(normalize_st_guards(k));
  FormulaPtr g = mk_formula(std::move(out));
  if (g->kind == Formula::Kind::Quant && !g->standard) {
    const FormulaPtr& body = g->kids[0];
    auto guard_is_var = [&](const FormulaPtr& h) {
      return h->kind == Formula::Kind::St && h->terms[0]->kind == TermExpr::Kind::Var &&
             h->terms[0]->name == g->var;
    };
    if (g->forall && body->kind == Formula::Kind::Implies && guard_is_var(body->kids[0]))
      return f_quant(true, true, g->var, g->var_type, body->kids[1]);
    if (!g->forall && body->kind == Formula::Kind::And && guard_is_var(body->kids[0]))
      return f_quant(false, true, g->var, g->var_type, body->kids[1]);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Type reconstruction over a whole formula. Builtin numeric relations are
// pinned to (0,0); other relation symbols get one signature per formula,
// unified across occurrences.

namespace detail {

struct FormulaTyping {
  TypeInference ti;
  std::map<std::string, ITy> free_env;
  std::map<std::string, std::vector<ITy>> rel_sigs;
  std::map<const TermExpr*, ITy> term_types;    // Var occurrences and Lam binders
  std::map<const Formula*, ITy> binder_types;   // Quant / ElemOfSeq variables

  static bool builtin_rel(const std::string& n) {
    return n == "leq" || n == "lt" || n == "eq0" || n == "neq0";
  }

  ITy infer_term(const TermPtr& t, std::map<std::string, ITy>& bound) {
    using K = TermExpr::Kind;
    switch (t->kind) {
      case K::Var: {
        ITy ty;
        auto it = bound.find(t->name);
        if (it != bound.end()) ty = it->second;
        else {
          auto fit = free_env.find(t->name);
          if (fit == free_env.end())
            fit = free_env.emplace(t->name, t->ty ? ti.from_fin(t->ty) : ti.fresh()).first;
          ty = fit->second;
        }
        if (t->ty) ti.unify(ty, ti.from_fin(t->ty), "variable " + t->name);
        term_types[t.get()] = ty;
        return ty;
      }
      case K::App: {
        ITy tf = infer_term(t->kids[0], bound);
        ITy ta = infer_term(t->kids[1], bound);
        ITy res = ti.fresh();
        ti.unify(tf, it_arrow(ta, res), "application " + term_to_string(t));
        return res;
      }
      case K::Lam: {
        ITy tv = t->ty ? ti.from_fin(t->ty) : ti.fresh();
        term_types[t.get()] = tv;
        auto saved = bound.count(t->name) ? std::optional<ITy>(bound[t->name]) : std::nullopt;
        bound[t->name] = tv;
        ITy tb = infer_term(t->kids[0], bound);
        if (saved) bound[t->name] = *saved;
        else bound.erase(t->name);
        return it_arrow(tv, tb);
      }
      case K::NumLit: return it_nat();
      case K::Succ:
        ti.unify(infer_term(t->kids[0], bound), it_nat(), "succ");
        return it_nat();
      case K::Rec: {
        ITy sigma = infer_term(t->kids[0], bound);
        ITy step = infer_term(t->kids[1], bound);
        ti.unify(step, it_arrow(it_nat(), it_arrow(sigma, sigma)), "rec step");
        return it_arrow(it_nat(), sigma);
      }
      case K::SeqLit: {
        if (t->kids.empty()) throw TypeError("empty sequence literal has no element type");
        ITy elem = infer_term(t->kids[0], bound);
        for (size_t i = 1; i < t->kids.size(); ++i)
          ti.unify(elem, infer_term(t->kids[i], bound), "sequence literal");
        return it_seq(elem);
      }
      case K::SeqLen:
        ti.unify(infer_term(t->kids[0], bound), it_seq(ti.fresh()), "len");
        return it_nat();
      case K::SeqGet: {
        ITy elem = ti.fresh();
        ti.unify(infer_term(t->kids[0], bound), it_seq(elem), "get");
        ti.unify(infer_term(t->kids[1], bound), it_nat(), "get index");
        return elem;
      }
      case K::SeqAppend: {
        ITy elem = ti.fresh();
        ITy s = infer_term(t->kids[0], bound);
        ti.unify(s, it_seq(elem), "append");
        ti.unify(infer_term(t->kids[1], bound), elem, "append element");
        return s;
      }
      case K::MaxOf:
        ti.unify(infer_term(t->kids[0], bound), it_seq(it_nat()), "maxof");
        return it_nat();
    }
    throw TypeError("unreachable term kind");
  }

  void infer(const FormulaPtr& f, std::map<std::string, ITy>& bound) {
    switch (f->kind) {
      case Formula::Kind::Rel: {
        std::vector<ITy> args;
        for (auto& t : f->terms) args.push_back(infer_term(t, bound));
        if (builtin_rel(f->rel_name)) {
          if (args.size() != 2) throw TypeError("builtin relation " + f->rel_name + " takes 2 arguments");
          ti.unify(args[0], it_nat(), f->rel_name);
          ti.unify(args[1], it_nat(), f->rel_name);
          return;
        }
        auto it = rel_sigs.find(f->rel_name);
        if (it == rel_sigs.end()) {
          rel_sigs.emplace(f->rel_name, args);
          return;
        }
        if (it->second.size() != args.size())
          throw TypeError("relation " + f->rel_name + " used with inconsistent arity");
        for (size_t i = 0; i < args.size(); ++i)
          ti.unify(it->second[i], args[i], "relation " + f->rel_name);
        return;
      }
      case Formula::Kind::St: infer_term(f->terms[0], bound); return;
      case Formula::Kind::ApproxReal: {
        ITy a = infer_term(f->terms[0], bound);
        ITy b = infer_term(f->terms[1], bound);
        ti.unify(a, b, "approxR");
        return;
      }
      case Formula::Kind::ApproxBaire: {
        ITy a = infer_term(f->terms[0], bound);
        ITy b = infer_term(f->terms[1], bound);
        ti.unify(a, it_arrow(it_nat(), it_nat()), "approx1");
        ti.unify(b, it_arrow(it_nat(), it_nat()), "approx1");
        return;
      }
      case Formula::Kind::Quant: {
        ITy tv = f->var_type ? ti.from_fin(f->var_type) : ti.fresh();
        binder_types[f.get()] = tv;
        auto saved = bound.count(f->var) ? std::optional<ITy>(bound[f->var]) : std::nullopt;
        bound[f->var] = tv;
        infer(f->kids[0], bound);
        if (saved) bound[f->var] = *saved;
        else bound.erase(f->var);
        return;
      }
      case Formula::Kind::InfiniteNat: {
        ITy tv = it_nat();
        binder_types[f.get()] = tv;
        auto saved = bound.count(f->var) ? std::optional<ITy>(bound[f->var]) : std::nullopt;
        bound[f->var] = tv;
        infer(f->kids[0], bound);
        if (saved) bound[f->var] = *saved;
        else bound.erase(f->var);
        return;
      }
      case Formula::Kind::ElemOfSeq: {
        ITy elem = f->var_type ? ti.from_fin(f->var_type) : ti.fresh();
        ti.unify(infer_term(f->terms[0], bound), it_seq(elem), "bounded quantifier sequence");
        binder_types[f.get()] = elem;
        auto saved = bound.count(f->var) ? std::optional<ITy>(bound[f->var]) : std::nullopt;
        bound[f->var] = elem;
        infer(f->kids[0], bound);
        if (saved) bound[f->var] = *saved;
        else bound.erase(f->var);
        return;
      }
      default:
        for (auto& k : f->kids) infer(k, bound);
        return;
    }
  }

  TermPtr annotate_term(const TermPtr& t) {
    TermExpr out = *t;
    out.kids.clear();
    if (t->kind == TermExpr::Kind::Var || t->kind == TermExpr::Kind::Lam)
      out.ty = ti.resolve(term_types.at(t.get()));
    for (auto& k : t->kids) out.kids.push_back(annotate_term(k));
    return mk_term(std::move(out));
  }

  FormulaPtr annotate(const FormulaPtr& f) {
    Formula out = *f;
    out.terms.clear();
    out.kids.clear();
    for (auto& t : f->terms) out.terms.push_back(annotate_term(t));
    if (is_binder(*f)) out.var_type = ti.resolve(binder_types.at(f.get()));
    for (auto& k : f->kids) out.kids.push_back(annotate(k));
    return mk_formula(std::move(out));
  }
};

}  // namespace detail

// Reconstructs all types in a raw (or rewritten) formula and returns the
// annotated tree. Throws TypeError naming the offending construct.
inline FormulaPtr typecheck_formula(const FormulaPtr& raw) {
  detail::FormulaTyping ft;
  std::map<std::string, ITy> bound;
  ft.infer(raw, bound);
  return ft.annotate(raw);
}

// Full pipeline for source text: parse, fold immediate st guards into the
// quantifier, make bound names unique, reconstruct types.
inline FormulaPtr parse_formula(const std::string& text) {
  Parser p(text);
  FormulaPtr raw = p.formula_only();
  raw = normalize_st_guards(raw);
  raw = alpha_normalize(raw);
  return typecheck_formula(raw);
}

inline TermPtr parse_term(const std::string& text) {
  Parser p(text);
  return p.term_only();
}

}  // namespace nsa
