#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace nsa {

// Finite types: 0, sigma->tau, sigma* (finite sequences).
struct FinType;
using TypePtr = std::shared_ptr<const FinType>;

struct FinType {
  enum class Kind { Nat, Arrow, Seq };
  Kind kind;
  TypePtr a;  // Arrow domain / Seq element
  TypePtr b;  // Arrow codomain

  explicit FinType(Kind k, TypePtr x = nullptr, TypePtr y = nullptr)
      : kind(k), a(std::move(x)), b(std::move(y)) {}
};

inline TypePtr nat_type() {
  static const TypePtr t = std::make_shared<FinType>(FinType::Kind::Nat);
  return t;
}

inline TypePtr arrow_type(TypePtr dom, TypePtr cod) {
  return std::make_shared<FinType>(FinType::Kind::Arrow, std::move(dom), std::move(cod));
}

inline TypePtr seq_type(TypePtr elem) {
  return std::make_shared<FinType>(FinType::Kind::Seq, std::move(elem));
}

// Pure type n: 0 at n=0, otherwise (n-1) -> 0.
inline TypePtr pure_type(unsigned n) {
  TypePtr r = nat_type();
  for (unsigned i = 0; i < n; ++i) r = arrow_type(r, nat_type());
  return r;
}

inline bool type_equal(const TypePtr& x, const TypePtr& y) {
  if (x.get() == y.get()) return true;
  if (!x || !y) return false;
  if (x->kind != y->kind) return false;
  switch (x->kind) {
    case FinType::Kind::Nat: return true;
    case FinType::Kind::Seq: return type_equal(x->a, y->a);
    case FinType::Kind::Arrow: return type_equal(x->a, y->a) && type_equal(x->b, y->b);
  }
  return false;
}

inline bool is_nat(const TypePtr& t) { return t && t->kind == FinType::Kind::Nat; }
inline bool is_seq(const TypePtr& t) { return t && t->kind == FinType::Kind::Seq; }
inline bool is_arrow(const TypePtr& t) { return t && t->kind == FinType::Kind::Arrow; }

// Renders with minimal parentheses: arrow is right-associative, star binds tighter.
inline std::string type_to_string(const TypePtr& t) {
  if (!t) return "?";
  switch (t->kind) {
    case FinType::Kind::Nat: return "0";
    case FinType::Kind::Seq: {
      std::string inner = type_to_string(t->a);
      if (t->a->kind == FinType::Kind::Arrow) inner = "(" + inner + ")";
      return inner + "*";
    }
    case FinType::Kind::Arrow: {
      std::string dom = type_to_string(t->a);
      if (t->a->kind == FinType::Kind::Arrow) dom = "(" + dom + ")";
      return dom + "->" + type_to_string(t->b);
    }
  }
  return "?";
}

}  // namespace nsa
