#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fixtures.hpp"
#include "oracles.hpp"
#include "structvar/model_io.hpp"

using namespace structvar;

namespace {

VariablePool binary_pool(int n) {
  VariablePool pool;
  for (int i = 0; i < n; ++i) pool.add("B" + std::to_string(i), 2);
  return pool;
}

}  // namespace

TEST_CASE("scope indexing is row-major with the last variable fastest") {
  VariablePool pool = binary_pool(3);
  Scope s({0, 1, 2}, pool);
  CHECK(s.size() == 8);
  CHECK(s.stride(0) == 4);
  CHECK(s.stride(2) == 1);
  std::vector<int> states{1, 0, 1};
  CHECK(s.index_of(states) == 5);
  std::vector<int> back(3);
  s.states_of(5, back);
  CHECK(back == states);
  CHECK_THROWS_AS(Scope({0, 0}, pool), StructuralError);
}

TEST_CASE("variable pool rejects degenerate model variables") {
  VariablePool pool;
  pool.add("A", 2);
  CHECK_THROWS_AS(pool.add("A", 2), StructuralError);
  CHECK_THROWS_AS(pool.add("B", 1), StructuralError);
  CHECK(pool.add("V", 1, 1) == 1);  // auxiliary variables may be unary
}

TEST_CASE("factor_product matches the spec examples") {
  VariablePool pool = binary_pool(2);
  TableFactor f(Scope({0}, pool), {0.5, 0.5});

  SUBCASE("unit factor is the identity") {
    TableFactor unit(Scope({}, pool), {1.0});
    TableFactor out = factor_product(f, unit);
    CHECK(out.scope == f.scope);
    CHECK(out.values == f.values);
  }
  SUBCASE("self product squares entries") {
    TableFactor out = factor_product(f, f);
    CHECK(out.scope == f.scope);
    CHECK(out[0] == doctest::Approx(0.25));
    CHECK(out[1] == doctest::Approx(0.25));
  }
  SUBCASE("scope union and direct enumeration") {
    TableFactor a(Scope({0}, pool), {2, 3});
    TableFactor g(Scope({0, 1}, pool), {1, 2, 3, 4});
    TableFactor out = factor_product(a, g);
    CHECK(out.scope.vars() == std::vector<VarId>{0, 1});
    CHECK(out.values == std::vector<double>{2, 4, 9, 12});
  }
  SUBCASE("cardinality mismatch is a structural error") {
    VariablePool other;
    other.add("B0", 3);
    TableFactor bad(Scope({0}, other), {1, 1, 1});
    CHECK_THROWS_AS(factor_product(f, bad), StructuralError);
  }
}

TEST_CASE("factor_marginalize matches the spec examples") {
  VariablePool pool = binary_pool(2);
  TableFactor f(Scope({0, 1}, pool), {1, 2, 3, 4});

  SUBCASE("marginalizing nothing returns the factor") {
    TableFactor out = factor_marginalize(f, f.scope.vars());
    CHECK(out.values == f.values);
  }
  SUBCASE("summing out the fast variable") {
    std::vector<VarId> keep{0};
    TableFactor out = factor_marginalize(f, keep);
    CHECK(out.values == std::vector<double>{3, 7});
  }
  SUBCASE("keeping nothing gives the total") {
    TableFactor out = factor_marginalize(f, {});
    CHECK(out.scope.empty());
    CHECK(out[0] == doctest::Approx(10.0));
  }
  SUBCASE("keeping an absent variable is a structural error") {
    TableFactor g(Scope({0}, pool), {1, 1});
    std::vector<VarId> keep{1};
    CHECK_THROWS_AS(factor_marginalize(g, keep), StructuralError);
  }
}

TEST_CASE("factor_restrict matches the spec examples and is idempotent") {
  VariablePool pool = binary_pool(2);
  SUBCASE("empty evidence is the identity") {
    TableFactor f(Scope({0}, pool), {0.3, 0.7});
    CHECK(factor_restrict(f, {}).values == f.values);
  }
  SUBCASE("binding the lone variable zeroes the other state") {
    TableFactor f(Scope({0}, pool), {0.3, 0.7});
    Evidence ev{{0, 0}};
    CHECK(factor_restrict(f, ev).values == std::vector<double>{0.3, 0.0});
  }
  SUBCASE("consistent cells survive") {
    TableFactor f(Scope({0, 1}, pool), {1, 2, 3, 4});
    Evidence ev{{1, 1}};
    CHECK(factor_restrict(f, ev).values == std::vector<double>{0, 2, 0, 4});
  }
  SUBCASE("idempotence is exact") {
    auto rng = rng_stream(7, "restrict", 0);
    TableFactor f(Scope({0, 1}, pool));
    for (auto& x : f.values) x = uniform01(rng);
    Evidence ev{{0, 1}};
    TableFactor once = factor_restrict(f, ev);
    TableFactor twice = factor_restrict(once, ev);
    CHECK(once.values == twice.values);
  }
}

TEST_CASE("product/marginalize round trip with a normalized disjoint factor") {
  VariablePool pool = binary_pool(4);
  auto rng = rng_stream(11, "roundtrip", 0);
  TableFactor f(Scope({0, 1}, pool));
  for (auto& x : f.values) x = uniform01(rng);
  TableFactor g(Scope({2, 3}, pool));
  for (auto& x : g.values) x = uniform01(rng);
  normalize_total(g);
  TableFactor back = factor_marginalize(factor_product(f, g), f.scope.vars());
  for (std::int64_t c = 0; c < f.scope.size(); ++c)
    CHECK(back[c] == doctest::Approx(f[c]).epsilon(1e-12));
}

TEST_CASE("factor_reduce slices evidence variables out of the scope") {
  VariablePool pool = binary_pool(2);
  TableFactor f(Scope({0, 1}, pool), {1, 2, 3, 4});
  Evidence ev{{1, 1}};
  TableFactor out = factor_reduce(f, ev);
  CHECK(out.scope.vars() == std::vector<VarId>{0});
  CHECK(out.values == std::vector<double>{2, 4});
}

TEST_CASE("directed family construction validates and normalizes columns") {
  VariablePool pool = binary_pool(2);
  TableFactor cpt(Scope({0, 1}, pool), {0.2, 0.8, 0.6, 0.4});
  DirectedFamily fam = make_family(1, cpt);
  CHECK(fam.parents.vars() == std::vector<VarId>{0});
  CHECK(columns_normalized(fam));

  // Child first in the stored scope gets permuted to [parents..., child].
  TableFactor swapped(Scope({1, 0}, pool), {0.2, 0.6, 0.8, 0.4});
  DirectedFamily fam2 = make_family(1, swapped);
  CHECK(fam2.cpt.scope.vars() == std::vector<VarId>{0, 1});
  CHECK(fam2.cpt.values == fam.cpt.values);

  TableFactor bad(Scope({0, 1}, pool), {0.2, 0.9, 0.6, 0.4});
  CHECK_THROWS_AS(make_family(1, bad), StructuralError);
}

TEST_CASE("d-separation spec examples") {
  SUBCASE("unobserved collider blocks") {
    Dag dag(3);  // A -> C <- B
    dag.add_edge(0, 2);
    dag.add_edge(1, 2);
    std::vector<VarId> y{1}, z{};
    CHECK(d_separated(dag, 0, y, z));
    std::vector<VarId> zc{2};
    CHECK_FALSE(d_separated(dag, 0, y, zc));
  }
  SUBCASE("observing the child of several hidden parents couples them") {
    auto fx = fixtures::figure1(3);
    CHECK_FALSE(d_separated(fx.model, fx.t1, Scope({fx.t2}, fx.model.pool),
                            Scope({fx.o1}, fx.model.pool)));
    // T1 and T4 stay separated: both paths run through unobserved colliders.
    CHECK(d_separated(fx.model, fx.t1, Scope({fx.t4}, fx.model.pool), Scope({}, fx.model.pool)));
  }
  SUBCASE("observed chain node blocks") {
    Dag dag(3);  // A -> B -> C
    dag.add_edge(0, 1);
    dag.add_edge(1, 2);
    std::vector<VarId> y{2}, z{1};
    CHECK(d_separated(dag, 0, y, z));
    std::vector<VarId> ze{};
    CHECK_FALSE(d_separated(dag, 0, y, ze));
  }
  SUBCASE("non-directed models are rejected") {
    FactorizedModel m;
    m.pool.add("A", 2);
    ModelFactor f;
    f.table = TableFactor(Scope({0}, m.pool), {1, 3});
    m.factors.push_back(f);
    m.directed = false;
    CHECK_THROWS_AS(d_separated(m, 0, Scope({}, m.pool), Scope({}, m.pool)), StructuralError);
  }
}

TEST_CASE("d-separation agrees with brute-force conditional independence") {
  // Random 5-node directed models with strictly positive Dirichlet CPTs:
  // separation must imply equality of conditionals; dependence must show as
  // inequality in at least 95% of sampled models.
  const int n = 5;
  int dependent_queries = 0;
  int dependent_violations = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    FactorizedModel m = fixtures::random_directed(n, seed, 0.5, 1.0);
    ResolvedStructure rs = resolve_structure(m.pool, fixtures::posterior_skeleton(m, {}));
    // Copy the model's own tables into an approximation for the CI oracle.
    std::vector<DirectedFamily> families;
    for (const auto& f : m.factors) families.push_back(make_family(f.child, f.table));
    BnApproximation q(m.pool, std::move(families));
    Dag dag = dag_of(m);

    for (VarId x = 0; x < n; ++x)
      for (VarId y = 0; y < n; ++y) {
        if (x == y) continue;
        for (VarId z = 0; z < n; ++z) {
          if (z == x || z == y) continue;
          std::vector<VarId> ys{y}, zs{z};
          bool sep = d_separated(dag, x, ys, zs);
          bool ci = oracle::conditionally_independent(m.pool, q, x, ys, zs, 1e-9);
          if (sep) {
            CHECK(ci);  // separation is sound
          } else {
            ++dependent_queries;
            if (ci) ++dependent_violations;
          }
        }
      }
  }
  REQUIRE(dependent_queries > 0);
  CHECK(static_cast<double>(dependent_violations) <= 0.05 * dependent_queries);
}

TEST_CASE("model json round trip preserves tables and evidence") {
  auto fx = fixtures::figure1(17);
  std::string text = model_to_json(fx.model, fx.evidence);
  ModelFile back = parse_model_json(text);
  CHECK(back.model.directed);
  CHECK(back.model.pool.size() == fx.model.pool.size());
  REQUIRE(back.model.factors.size() == fx.model.factors.size());
  for (size_t i = 0; i < back.model.factors.size(); ++i) {
    CHECK(back.model.factors[i].table.values == fx.model.factors[i].table.values);
    CHECK(back.model.factors[i].child == fx.model.factors[i].child);
  }
  CHECK(back.evidence.state(fx.o1) == 0);
  CHECK(model_to_json(back.model, back.evidence) == text);
}

TEST_CASE("malformed model files are rejected") {
  CHECK_THROWS_AS(parse_model_json("{not json"), StructuralError);
  CHECK_THROWS_AS(parse_model_json("{\"variables\": 3}"), StructuralError);
  // CPT columns must normalize.
  CHECK_THROWS_AS(
      parse_model_json(R"({"variables": [{"name": "A", "cardinality": 2}],
        "factors": [{"scope": ["A"], "values": [0.5, 0.6], "kind": "cpt", "child": "A"}]})"),
      StructuralError);
  // Evidence must be in range.
  CHECK_THROWS_AS(
      parse_model_json(R"({"variables": [{"name": "A", "cardinality": 2}],
        "factors": [{"scope": ["A"], "values": [0.5, 0.5], "kind": "cpt", "child": "A"}],
        "evidence": {"A": 2}})"),
      StructuralError);
}
