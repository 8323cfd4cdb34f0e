#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "structvar/dbn.hpp"
#include "structvar/model_io.hpp"

using namespace structvar;

TEST_CASE("generate_dbn spec cases") {
  SUBCASE("one slice of three chain variables") {
    DbnConfig cfg{1, 3, 42};
    GeneratedDbn gen = generate_dbn(cfg);
    CHECK(gen.model.pool.size() == 4);
    CHECK(gen.evidence.size() == 1);
    CHECK(gen.model.directed);
    validate_model(gen.model);
    double le = log_evidence(gen.model, gen.evidence);
    CHECK(le == doctest::Approx(oracle::log_evidence(gen.model, gen.evidence)).epsilon(1e-10));
  }
  SUBCASE("identical seeds give bit-identical model files") {
    DbnConfig cfg{3, 4, 7};
    GeneratedDbn a = generate_dbn(cfg);
    GeneratedDbn b = generate_dbn(cfg);
    CHECK(model_to_json(a.model, a.evidence) == model_to_json(b.model, b.evidence));
    DbnConfig other{3, 4, 8};
    GeneratedDbn c = generate_dbn(other);
    CHECK(model_to_json(a.model, a.evidence) != model_to_json(c.model, c.evidence));
  }
  SUBCASE("five slices stay tractable for variable elimination") {
    DbnConfig cfg{5, 3, 11};
    GeneratedDbn gen = generate_dbn(cfg);
    CHECK(gen.model.pool.size() == 20);
    CHECK(gen.evidence.size() == 5);
    double le = log_evidence(gen.model, gen.evidence);
    CHECK(std::isfinite(le));
    CHECK(le < 0.0);
  }
  SUBCASE("edges follow the slice topology") {
    DbnConfig cfg{2, 3, 13};
    GeneratedDbn gen = generate_dbn(cfg);
    const auto& pool = gen.model.pool;
    // X2_2 has parents {X2_1, X1_2}.
    for (const auto& f : gen.model.factors) {
      if (pool.name(f.child) == "X2_2") {
        std::vector<std::string> parents;
        for (VarId v : f.table.scope.vars())
          if (v != f.child) parents.push_back(pool.name(v));
        CHECK(parents == std::vector<std::string>{"X2_1", "X1_2"});
      }
      if (pool.name(f.child) == "O_2") {
        CHECK(f.table.scope.arity() == 4);
      }
    }
  }
}

TEST_CASE("structure builders") {
  DbnConfig cfg{2, 3, 0};
  SUBCASE("vertical keeps in-slice edges and chains the slice variables") {
    QStructure s = build_vertical_approx(cfg, 2);
    CHECK(s.hidden.size() == 2);
    GeneratedDbn gen = generate_dbn(cfg);
    ResolvedStructure rs = resolve_structure(gen.model.pool, s);
    CHECK(rs.families.size() == 8);  // 6 chain vars + 2 hidden
    // Resolvable and acyclic by construction; fitting must accept it.
    OptimizerOptions opts;
    opts.restarts = 1;
    opts.max_sweeps = 2;
    HiddenFitResult r = fit_hidden(gen.model, gen.evidence, rs, opts);
    CHECK(std::isfinite(r.bound));
  }
  SUBCASE("horizontal keeps temporal edges with one hidden var per chain") {
    QStructure s = build_horizontal_approx(cfg, 2);
    CHECK(s.hidden.size() == 3);
    GeneratedDbn gen = generate_dbn(cfg);
    ResolvedStructure rs = resolve_structure(gen.model.pool, s);
    CHECK(rs.families.size() == 9);  // 6 chain vars + 3 hidden
    OptimizerOptions opts;
    opts.restarts = 1;
    opts.max_sweeps = 2;
    HiddenFitResult r = fit_hidden(gen.model, gen.evidence, rs, opts);
    CHECK(std::isfinite(r.bound));
  }
  SUBCASE("unit-cardinality hidden variables reduce to the plain structured fit") {
    GeneratedDbn gen = generate_dbn(cfg);
    OptimizerOptions opts;
    opts.restarts = 2;
    opts.max_sweeps = 5;
    opts.seed = 99;
    for (auto builder : {build_vertical_approx, build_horizontal_approx}) {
      ResolvedStructure rs = resolve_structure(gen.model.pool, builder(cfg, 1));
      HiddenFitResult hr = fit_hidden(gen.model, gen.evidence, rs, opts);
      BnFitResult br = fit_bn(gen.model, gen.evidence, rs, opts);
      CHECK(hr.bound == doctest::Approx(br.bound).epsilon(1e-10));
      CHECK(hr.restart_index == br.restart_index);
    }
  }
}

TEST_CASE("summarize nearest-rank percentiles") {
  SUBCASE("degenerate distribution") {
    std::vector<RunRecord> records;
    for (int i = 0; i < 20; ++i) {
      RunRecord r;
      r.slices = 2;
      r.vars_per_slice = 3;
      r.kind = MethodKind::Mixture;
      r.variant = 1;
      r.net_index = i;
      r.gap_per_slice = 0.37;
      records.push_back(r);
    }
    auto rows = summarize(records);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].median == doctest::Approx(0.37));
    CHECK(rows[0].p25 == doctest::Approx(0.37));
    CHECK(rows[0].p75 == doctest::Approx(0.37));
    CHECK(rows[0].count == 20);
  }
  SUBCASE("1..20 gives median 10, p25 5, p75 15") {
    std::vector<RunRecord> records;
    for (int i = 1; i <= 20; ++i) {
      RunRecord r;
      r.slices = 4;
      r.vars_per_slice = 3;
      r.kind = MethodKind::Vertical;
      r.variant = 2;
      r.net_index = i;
      r.gap_per_slice = static_cast<double>(i);
      records.push_back(r);
    }
    auto rows = summarize(records);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].median == doctest::Approx(10.0));
    CHECK(rows[0].p25 == doctest::Approx(5.0));
    CHECK(rows[0].p75 == doctest::Approx(15.0));
  }
}

TEST_CASE("run_benchmark") {
  SUBCASE("single record has a sound gap") {
    BenchmarkConfig bc;
    bc.slices = {2};
    bc.vars = {3};
    bc.methods = {{MethodKind::Mixture, 1}};
    bc.nets_per_cell = 1;
    bc.opts.restarts = 2;
    bc.opts.max_sweeps = 3;
    bc.opts.seed = 5;
    auto records = run_benchmark(bc);
    REQUIRE(records.size() == 1);
    CHECK(records[0].gap_per_slice >= -1e-9 / 2);
    CHECK_FALSE(records[0].flagged);
  }
  SUBCASE("records are deterministic and parallelism-invariant") {
    BenchmarkConfig bc;
    bc.slices = {2, 3};
    bc.vars = {3};
    bc.methods = {{MethodKind::Mixture, 2}, {MethodKind::Vertical, 2}};
    bc.nets_per_cell = 2;
    bc.opts.restarts = 2;
    bc.opts.max_sweeps = 3;
    bc.opts.seed = 17;
    bc.jobs = 1;
    auto serial = run_benchmark(bc);
    bc.jobs = 2;
    auto parallel = run_benchmark(bc);
    REQUIRE(serial.size() == parallel.size());
    for (size_t i = 0; i < serial.size(); ++i) {
      CHECK(serial[i].bound == parallel[i].bound);
      CHECK(serial[i].log_evidence == parallel[i].log_evidence);
      CHECK(serial[i].gap_per_slice == parallel[i].gap_per_slice);
      CHECK(serial[i].net_index == parallel[i].net_index);
    }
  }
  SUBCASE("reduced smoke grid completes within the time budget") {
    auto t0 = std::chrono::steady_clock::now();
    BenchmarkConfig bc;
    bc.slices = {2, 3};
    bc.vars = {3, 4};
    bc.nets_per_cell = 5;
    bc.opts.restarts = 10;
    bc.opts.max_sweeps = 10;
    bc.opts.seed = 23;
    auto records = run_benchmark(bc);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(records.size() == 2 * 2 * 5 * 9);
    for (const auto& r : records) CHECK(r.gap_per_slice >= -1e-9);
    CHECK(secs < 60.0);
    MESSAGE("smoke grid took ", secs, " s");
  }
}

TEST_CASE("records csv round trip") {
  BenchmarkConfig bc;
  bc.slices = {2};
  bc.vars = {3};
  bc.methods = {{MethodKind::Horizontal, 2}};
  bc.nets_per_cell = 2;
  bc.opts.restarts = 1;
  bc.opts.max_sweeps = 2;
  auto records = run_benchmark(bc);
  std::string path = "/tmp/structvar_test_records.csv";
  write_records_csv(path, records);
  auto back = read_records_csv(path);
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].bound == records[i].bound);
    CHECK(back[i].log_evidence == records[i].log_evidence);
    CHECK(back[i].gap_per_slice == records[i].gap_per_slice);
    CHECK(back[i].kind == records[i].kind);
    CHECK(back[i].variant == records[i].variant);
  }
}
