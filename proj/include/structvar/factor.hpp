#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace structvar {

using VarId = std::int32_t;

struct StructuralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VariableSpec {
  VarId id = -1;
  std::string name;
  int cardinality = 2;
};

// Registry of variables; ids are contiguous indices into the pool.
// Model variables require cardinality >= 2; auxiliary hidden variables
// used by the approximations may have cardinality 1.
class VariablePool {
 public:
  VarId add(std::string name, int cardinality, int min_cardinality = 2);
  int card(VarId v) const { return vars_.at(static_cast<size_t>(v)).cardinality; }
  const std::string& name(VarId v) const { return vars_.at(static_cast<size_t>(v)).name; }
  std::optional<VarId> find(const std::string& name) const;
  VarId require(const std::string& name) const;
  int size() const { return static_cast<int>(vars_.size()); }
  const std::vector<VariableSpec>& variables() const { return vars_; }

 private:
  std::vector<VariableSpec> vars_;
  std::unordered_map<std::string, VarId> by_name_;
};

// Ordered variable scope with row-major strides, last variable fastest.
class Scope {
 public:
  Scope() = default;
  Scope(std::vector<VarId> vars, const VariablePool& pool);
  Scope(std::vector<VarId> vars, std::vector<int> cards);

  const std::vector<VarId>& vars() const { return vars_; }
  const std::vector<int>& cards() const { return cards_; }
  const std::vector<std::int64_t>& strides() const { return strides_; }
  int arity() const { return static_cast<int>(vars_.size()); }
  std::int64_t size() const { return size_; }
  bool empty() const { return vars_.empty(); }
  bool contains(VarId v) const { return position(v) >= 0; }
  int position(VarId v) const;
  VarId var(int pos) const { return vars_[static_cast<size_t>(pos)]; }
  int card(int pos) const { return cards_[static_cast<size_t>(pos)]; }
  std::int64_t stride(int pos) const { return strides_[static_cast<size_t>(pos)]; }

  // Flat index of a full assignment (one state per scope variable, scope order).
  std::int64_t index_of(std::span<const int> states) const;
  // Inverse of index_of.
  void states_of(std::int64_t index, std::span<int> states) const;

  bool operator==(const Scope& other) const {
    return vars_ == other.vars_ && cards_ == other.cards_;
  }

 private:
  void init_strides();

  std::vector<VarId> vars_;
  std::vector<int> cards_;
  std::vector<std::int64_t> strides_;
  std::int64_t size_ = 1;
};

// Observed-variable bindings, kept sorted by variable id.
class Evidence {
 public:
  Evidence() = default;
  Evidence(std::initializer_list<std::pair<VarId, int>> init);

  void set(VarId v, int state);
  std::optional<int> state(VarId v) const;
  bool binds(VarId v) const { return state(v).has_value(); }
  bool empty() const { return bindings_.empty(); }
  size_t size() const { return bindings_.size(); }
  const std::vector<std::pair<VarId, int>>& bindings() const { return bindings_; }

 private:
  std::vector<std::pair<VarId, int>> bindings_;
};

// Dense nonnegative table over a scope.
struct TableFactor {
  Scope scope;
  std::vector<double> values;

  TableFactor() = default;
  explicit TableFactor(Scope s, double fill = 0.0)
      : scope(std::move(s)), values(static_cast<size_t>(scope.size()), fill) {}
  TableFactor(Scope s, std::vector<double> v);

  double& operator[](std::int64_t i) { return values[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return values[static_cast<size_t>(i)]; }
  double total() const;
};

// Pointwise product over the union scope (f's order first, then g's new vars).
TableFactor factor_product(const TableFactor& f, const TableFactor& g);

// Sum out every variable not in `keep`; kept variables preserve f's scope order.
TableFactor factor_marginalize(const TableFactor& f, std::span<const VarId> keep);

// Zero out entries inconsistent with the evidence; scope unchanged.
TableFactor factor_restrict(const TableFactor& f, const Evidence& ev);

// Drop evidence variables from the scope, selecting their observed slice.
TableFactor factor_reduce(const TableFactor& f, const Evidence& ev);

// Reorder the scope; entries are permuted accordingly.
TableFactor factor_permute(const TableFactor& f, const std::vector<VarId>& new_order);

// Rescale so the table sums to one. Returns false if the total is zero.
bool normalize_total(TableFactor& f);

// Normalized copy of f restricted to `clamp`, representing a conditional
// distribution over the unclamped part of f.scope. Returns false (and zeros)
// when the clamped slice has no mass.
bool condition_on(const TableFactor& joint, const Evidence& clamp, TableFactor& out);

}  // namespace structvar
