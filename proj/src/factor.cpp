#include "structvar/factor.hpp"

#include <algorithm>
#include <cmath>

namespace structvar {

VarId VariablePool::add(std::string name, int cardinality, int min_cardinality) {
  if (cardinality < min_cardinality)
    throw StructuralError("variable '" + name + "' has cardinality " +
                          std::to_string(cardinality) + " < " + std::to_string(min_cardinality));
  if (by_name_.count(name)) throw StructuralError("duplicate variable name '" + name + "'");
  VarId id = static_cast<VarId>(vars_.size());
  by_name_.emplace(name, id);
  vars_.push_back(VariableSpec{id, std::move(name), cardinality});
  return id;
}

std::optional<VarId> VariablePool::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

VarId VariablePool::require(const std::string& name) const {
  auto v = find(name);
  if (!v) throw StructuralError("unknown variable '" + name + "'");
  return *v;
}

Scope::Scope(std::vector<VarId> vars, const VariablePool& pool) : vars_(std::move(vars)) {
  cards_.reserve(vars_.size());
  for (VarId v : vars_) cards_.push_back(pool.card(v));
  init_strides();
}

Scope::Scope(std::vector<VarId> vars, std::vector<int> cards)
    : vars_(std::move(vars)), cards_(std::move(cards)) {
  if (vars_.size() != cards_.size()) throw StructuralError("scope vars/cards length mismatch");
  init_strides();
}

void Scope::init_strides() {
  for (size_t i = 0; i < vars_.size(); ++i)
    for (size_t j = i + 1; j < vars_.size(); ++j)
      if (vars_[i] == vars_[j]) throw StructuralError("repeated variable in scope");
  strides_.assign(vars_.size(), 1);
  size_ = 1;
  for (int i = static_cast<int>(vars_.size()) - 1; i >= 0; --i) {
    strides_[static_cast<size_t>(i)] = size_;
    size_ *= cards_[static_cast<size_t>(i)];
  }
}

int Scope::position(VarId v) const {
  for (size_t i = 0; i < vars_.size(); ++i)
    if (vars_[i] == v) return static_cast<int>(i);
  return -1;
}

std::int64_t Scope::index_of(std::span<const int> states) const {
  std::int64_t idx = 0;
  for (size_t i = 0; i < vars_.size(); ++i) idx += states[i] * strides_[i];
  return idx;
}

void Scope::states_of(std::int64_t index, std::span<int> states) const {
  for (size_t i = 0; i < vars_.size(); ++i) {
    states[i] = static_cast<int>(index / strides_[i]);
    index %= strides_[i];
  }
}

Evidence::Evidence(std::initializer_list<std::pair<VarId, int>> init) {
  for (const auto& [v, s] : init) set(v, s);
}

void Evidence::set(VarId v, int state) {
  auto it = std::lower_bound(bindings_.begin(), bindings_.end(), v,
                             [](const auto& p, VarId x) { return p.first < x; });
  if (it != bindings_.end() && it->first == v)
    it->second = state;
  else
    bindings_.insert(it, {v, state});
}

std::optional<int> Evidence::state(VarId v) const {
  auto it = std::lower_bound(bindings_.begin(), bindings_.end(), v,
                             [](const auto& p, VarId x) { return p.first < x; });
  if (it != bindings_.end() && it->first == v) return it->second;
  return std::nullopt;
}

TableFactor::TableFactor(Scope s, std::vector<double> v)
    : scope(std::move(s)), values(std::move(v)) {
  if (static_cast<std::int64_t>(values.size()) != scope.size())
    throw StructuralError("table length does not match scope size");
}

double TableFactor::total() const {
  double t = 0.0;
  for (double x : values) t += x;
  return t;
}

namespace {

// Per-variable stride of `inner` laid over the cells of `outer` (0 where absent).
// Walking outer's cells in row-major order while accumulating these strides
// yields the matching flat index into inner.
std::vector<std::int64_t> embedded_strides(const Scope& outer, const Scope& inner) {
  std::vector<std::int64_t> strides(static_cast<size_t>(outer.arity()), 0);
  for (int i = 0; i < outer.arity(); ++i) {
    int pos = inner.position(outer.var(i));
    if (pos >= 0) {
      if (inner.card(pos) != outer.card(i))
        throw StructuralError("cardinality mismatch for shared variable");
      strides[static_cast<size_t>(i)] = inner.stride(pos);
    }
  }
  return strides;
}

// Odometer walk over `scope` driving an index into an embedded table.
struct EmbeddedCursor {
  EmbeddedCursor(const Scope& outer, const Scope& inner)
      : scope(outer), strides(embedded_strides(outer, inner)),
        states(static_cast<size_t>(outer.arity()), 0) {}

  const Scope& scope;
  std::vector<std::int64_t> strides;
  std::vector<int> states;
  std::int64_t index = 0;

  void advance() {
    for (int i = scope.arity() - 1; i >= 0; --i) {
      auto ui = static_cast<size_t>(i);
      if (++states[ui] < scope.card(i)) {
        index += strides[ui];
        return;
      }
      states[ui] = 0;
      index -= strides[ui] * (scope.card(i) - 1);
    }
  }
};

}  // namespace

TableFactor factor_product(const TableFactor& f, const TableFactor& g) {
  std::vector<VarId> vars = f.scope.vars();
  std::vector<int> cards = f.scope.cards();
  for (int i = 0; i < g.scope.arity(); ++i) {
    if (f.scope.contains(g.scope.var(i))) continue;
    vars.push_back(g.scope.var(i));
    cards.push_back(g.scope.card(i));
  }
  Scope scope(std::move(vars), std::move(cards));
  TableFactor out(scope);
  EmbeddedCursor fi(scope, f.scope), gi(scope, g.scope);
  for (std::int64_t c = 0; c < scope.size(); ++c, fi.advance(), gi.advance())
    out.values[static_cast<size_t>(c)] = f[fi.index] * g[gi.index];
  return out;
}

TableFactor factor_marginalize(const TableFactor& f, std::span<const VarId> keep) {
  std::vector<VarId> vars;
  std::vector<int> cards;
  for (VarId v : keep) {
    int pos = f.scope.position(v);
    if (pos < 0) throw StructuralError("marginalize: kept variable absent from scope");
    vars.push_back(v);
    cards.push_back(f.scope.card(pos));
  }
  Scope scope(std::move(vars), std::move(cards));
  TableFactor out(scope, 0.0);
  EmbeddedCursor oi(f.scope, scope);
  for (std::int64_t c = 0; c < f.scope.size(); ++c, oi.advance())
    out[oi.index] += f[c];
  return out;
}

TableFactor factor_restrict(const TableFactor& f, const Evidence& ev) {
  TableFactor out = f;
  for (int i = 0; i < f.scope.arity(); ++i) {
    auto bound = ev.state(f.scope.var(i));
    if (!bound) continue;
    if (*bound < 0 || *bound >= f.scope.card(i))
      throw StructuralError("evidence state out of range");
    std::int64_t stride = f.scope.stride(i);
    int card = f.scope.card(i);
    std::int64_t block = stride * card;
    for (std::int64_t base = 0; base < f.scope.size(); base += block)
      for (int s = 0; s < card; ++s) {
        if (s == *bound) continue;
        for (std::int64_t k = 0; k < stride; ++k) out[base + s * stride + k] = 0.0;
      }
  }
  return out;
}

TableFactor factor_reduce(const TableFactor& f, const Evidence& ev) {
  std::vector<VarId> kept_vars;
  std::vector<int> kept_cards;
  std::int64_t offset = 0;
  for (int i = 0; i < f.scope.arity(); ++i) {
    auto bound = ev.state(f.scope.var(i));
    if (bound) {
      if (*bound < 0 || *bound >= f.scope.card(i))
        throw StructuralError("evidence state out of range");
      offset += *bound * f.scope.stride(i);
    } else {
      kept_vars.push_back(f.scope.var(i));
      kept_cards.push_back(f.scope.card(i));
    }
  }
  Scope scope(std::move(kept_vars), std::move(kept_cards));
  TableFactor out(scope);
  EmbeddedCursor src(scope, f.scope);
  for (std::int64_t c = 0; c < scope.size(); ++c, src.advance())
    out[c] = f[offset + src.index];
  return out;
}

TableFactor factor_permute(const TableFactor& f, const std::vector<VarId>& new_order) {
  std::vector<int> cards;
  for (VarId v : new_order) {
    int pos = f.scope.position(v);
    if (pos < 0) throw StructuralError("permute: variable absent from scope");
    cards.push_back(f.scope.card(pos));
  }
  if (new_order.size() != static_cast<size_t>(f.scope.arity()))
    throw StructuralError("permute: order must cover the scope");
  Scope scope(new_order, std::move(cards));
  TableFactor out(scope);
  EmbeddedCursor src(scope, f.scope);
  for (std::int64_t c = 0; c < scope.size(); ++c, src.advance())
    out[c] = f[src.index];
  return out;
}

bool normalize_total(TableFactor& f) {
  double t = f.total();
  if (t <= 0.0) return false;
  for (double& x : f.values) x /= t;
  return true;
}

bool condition_on(const TableFactor& joint, const Evidence& clamp, TableFactor& out) {
  out = factor_restrict(joint, clamp);
  return normalize_total(out);
}

}  // namespace structvar
