#include <doctest.h>

#include <cmath>
#include <cstring>

#include "aquacal/archive.hpp"
#include "aquacal/inp.hpp"
#include "aquacal/rules.hpp"
#include "fixtures.hpp"

using namespace aquacal;

namespace {

NetworkModel grid() { return parse_inp(testing::grid_fixture_inp()).model; }

const char* kBothRules =
    "rule rough\nmatch pipe\nparam roughness\nbounds 0.0005 0.004\nend\n"
    "rule dem\nmatch junction\nparam base_demand\nbounds 0.3 0.8\nend\n";

SensorSet grid_sensors() {
    SensorSet s;
    s.flow_sensors = {"P1", "P2", "P3"};
    s.pressure_sensors = {"J11", "J33", "J55"};
    return s;
}

MeasurementSet truth_measurements(const NetworkModel& truth, const SensorSet& sensors) {
    auto sim = simulate_eps(truth);
    return observations_to_measurements(extract_observations(sim, sensors, true));
}

// A small but real calibration run on the grid network plus the context an
// archive needs. Shared by the round-trip and seeding cases.
struct Campaign {
    NetworkModel model;
    ParameterSpace space;
    MeasurementSet measurements;
    SensorSet sensors;
    NeatConfig neat;
    LoopConfig loop;
    CalibrationRun run;
    ArchiveContext context;
};

Campaign small_campaign() {
    Campaign c;
    auto truth = grid();
    c.model = truth;
    for (auto& p : c.model.pipes) p.roughness = 0.003;
    for (auto& j : c.model.junctions)
        if (j.base_demand_lps > 0.0) j.base_demand_lps = 0.6;
    c.space = compile_rules(parse_rules(kBothRules), c.model);
    c.sensors = grid_sensors();
    c.measurements = truth_measurements(truth, c.sensors);
    c.neat.population_size = 16;
    c.neat.max_generations = 6;
    c.neat.fitness_threshold = 1e-12; // keep both phases alive
    c.neat.seed = 41;
    c.loop.outer_iterations = 2;
    c.run = calibrate(c.model, c.space, c.measurements, c.sensors, c.neat, c.loop);

    auto [flow_specs, pressure_specs] = group_parameters(c.space);
    c.context.created_at = "2024-05-03T00:00:00Z";
    c.context.model_fingerprint = model_fingerprint(c.model);
    c.context.rules_fingerprint = text_fingerprint(kBothRules);
    c.context.schema = build_features(c.model).schema;
    c.context.flow_kinds = output_kinds(flow_specs);
    c.context.pressure_kinds = output_kinds(pressure_specs);
    c.context.neat = c.neat;
    c.context.loop = c.loop;
    c.context.objective = c.loop.objective;
    return c;
}

bool same_bits(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

const ConnectionGene* by_innovation(const Genome& g, int innovation) {
    for (const auto& c : g.connections)
        if (c.innovation == innovation) return &c;
    return nullptr;
}

} // namespace

TEST_CASE("save, load, save is byte-stable and reproduces the genomes exactly") {
    auto c = small_campaign();
    RunArchive a = make_archive(c.run, c.context);
    REQUIRE(a.flow_genome.has_value());
    REQUIRE(a.pressure_genome.has_value());

    std::string doc1 = save_archive(a);
    RunArchive back = load_archive(doc1);
    std::string doc2 = save_archive(back);
    CHECK(doc1 == doc2);

    REQUIRE(back.flow_genome.has_value());
    REQUIRE(back.flow_genome->connections.size() == a.flow_genome->connections.size());
    for (const auto& conn : a.flow_genome->connections) {
        const ConnectionGene* got = by_innovation(*back.flow_genome, conn.innovation);
        REQUIRE(got != nullptr);
        CHECK(same_bits(got->weight, conn.weight));
        CHECK(got->enabled == conn.enabled);
        CHECK(got->from == conn.from);
        CHECK(got->to == conn.to);
    }
    CHECK(back.created_at == a.created_at);
    CHECK(back.model_fingerprint == a.model_fingerprint);
    CHECK(back.rules_fingerprint == a.rules_fingerprint);
    CHECK(back.flow_kinds == a.flow_kinds);
    CHECK(back.pressure_kinds == a.pressure_kinds);
    CHECK(back.history.size() == a.history.size());
    CHECK(back.neat.seed == a.neat.seed);
    CHECK(back.neat.population_size == a.neat.population_size);
    CHECK(back.loop_outer_iterations == a.loop_outer_iterations);
}

TEST_CASE("an awkward weight like 0.1 survives the round trip bit for bit") {
    auto c = small_campaign();
    RunArchive a = make_archive(c.run, c.context);
    REQUIRE(!a.flow_genome->connections.empty());
    a.flow_genome->connections[0].weight = 0.1;
    a.flow_genome->connections.back().weight = -1.0 / 3.0;
    RunArchive back = load_archive(save_archive(a));
    int innov_first = a.flow_genome->connections[0].innovation;
    int innov_last = a.flow_genome->connections.back().innovation;
    CHECK(same_bits(by_innovation(*back.flow_genome, innov_first)->weight, 0.1));
    CHECK(same_bits(by_innovation(*back.flow_genome, innov_last)->weight, -1.0 / 3.0));
}

TEST_CASE("history flattens outer iterations into one generation axis") {
    CalibrationRun run;
    run.flow_history = {{1.0, 0.5}, {0.4}};
    run.flow_mean_history = {{2.0, 1.0}, {0.8}};
    run.pressure_history = {{3.0}};
    run.pressure_mean_history = {{4.0}};
    ArchiveContext ctx;
    ctx.created_at = "x";
    RunArchive a = make_archive(run, ctx);
    REQUIRE(a.history.size() == 4);
    CHECK(a.history[0].phase == Phase::flow);
    CHECK(a.history[0].generation == 0);
    CHECK(a.history[0].best == 1.0);
    CHECK(a.history[0].mean == 2.0);
    CHECK(a.history[1].generation == 1);
    CHECK(a.history[2].generation == 2);
    CHECK(a.history[2].best == 0.4);
    CHECK(a.history[2].mean == 0.8);
    CHECK(a.history[3].phase == Phase::pressure);
    CHECK(a.history[3].generation == 0);
    CHECK(a.history[3].best == 3.0);

    RunArchive back = load_archive(save_archive(a));
    REQUIRE(back.history.size() == 4);
    CHECK(back.history[2].best == 0.4);
    CHECK(back.history[3].mean == 4.0);
}

TEST_CASE("unsupported versions and corrupt documents are rejected with context") {
    auto c = small_campaign();
    std::string doc = save_archive(make_archive(c.run, c.context));

    SUBCASE("version 0 names both versions") {
        std::string v0 = doc;
        v0.replace(v0.find("v1"), 2, "v0");
        try {
            load_archive(v0);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            std::string msg = e.what();
            CHECK(msg.find("version 0") != std::string::npos);
            CHECK(msg.find("version 1") != std::string::npos);
        }
    }
    SUBCASE("missing header is corrupt at byte 0") {
        try {
            load_archive("not an archive\n");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            std::string msg = e.what();
            CHECK(msg.find("byte 0") != std::string::npos);
        }
    }
    SUBCASE("truncated document reports a byte offset") {
        std::string cut = doc.substr(0, doc.find("[groups]"));
        try {
            load_archive(cut);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            std::string msg = e.what();
            CHECK(msg.find("byte") != std::string::npos);
            CHECK(msg.find("missing") != std::string::npos);
        }
    }
    SUBCASE("mangled history row reports its byte offset") {
        auto at = doc.find("[history]\nflow");
        REQUIRE(at != std::string::npos);
        std::string bad = doc;
        bad.replace(at + 10, 4, "wxyz");
        CHECK_THROWS_AS(load_archive(bad), ParseError);
    }
    SUBCASE("tampered schema breaks the stored fingerprint") {
        auto at = doc.find("pipe length_norm");
        REQUIRE(at != std::string::npos);
        std::string bad = doc;
        bad.replace(at, 16, "pipe length_morn");
        try {
            load_archive(bad);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(std::string(e.what()).find("fingerprint") != std::string::npos);
        }
    }
    SUBCASE("duplicate genome node id violates genome invariants") {
        auto at = doc.find("[genome flow]\n");
        REQUIRE(at != std::string::npos);
        std::string bad = doc;
        bad.insert(at + 14, "node 0 input clamped\nnode 0 input clamped\n");
        CHECK_THROWS_AS(load_archive(bad), SchemaError);
    }
}

TEST_CASE("seeding succeeds on the same problem without warnings") {
    auto c = small_campaign();
    RunArchive a = load_archive(save_archive(make_archive(c.run, c.context)));
    SeedResult res = seed_calibration(a, c.model, c.space);
    CHECK(res.compatible());
    CHECK(res.warnings.empty());
    REQUIRE(res.flow.has_value());
    REQUIRE(res.pressure.has_value());
    CHECK(res.flow->n_inputs == c.run.flow_genome->n_inputs);
    CHECK(res.flow->connections.size() == c.run.flow_genome->connections.size());
}

TEST_CASE("adding a parameter kind to a group is refused with an explanation") {
    auto c = small_campaign();
    RunArchive a = make_archive(c.run, c.context);
    const char* wider =
        "rule rough\nmatch pipe\nparam roughness\nbounds 0.0005 0.004\nend\n"
        "rule minor\nmatch pipe\nparam minor_loss\nbounds 0 5\nend\n"
        "rule dem\nmatch junction\nparam base_demand\nbounds 0.3 0.8\nend\n";
    auto space2 = compile_rules(parse_rules(wider), c.model);
    SeedResult res = seed_calibration(a, c.model, space2);
    CHECK_FALSE(res.compatible());
    CHECK_FALSE(res.flow.has_value());
    CHECK_FALSE(res.pressure.has_value());
    REQUIRE(res.mismatches.size() == 1);
    CHECK(res.mismatches[0].find("pressure output kinds differ") != std::string::npos);
    CHECK(res.mismatches[0].find("minor_loss") != std::string::npos);
}

TEST_CASE("a perturbed network variant seeds with only a fingerprint warning") {
    auto c = small_campaign();
    RunArchive a = make_archive(c.run, c.context);
    NetworkModel variant = c.model;
    for (auto& p : variant.pipes) p.length_m *= 1.1;
    auto space2 = compile_rules(parse_rules(kBothRules), variant);
    SeedResult res = seed_calibration(a, variant, space2);
    CHECK(res.compatible());
    REQUIRE(res.flow.has_value());
    REQUIRE(res.warnings.size() == 1);
    CHECK(res.warnings[0].find("fingerprint") != std::string::npos);
}

TEST_CASE("a changed feature layout is refused with every difference listed") {
    auto c = small_campaign();
    RunArchive a = make_archive(c.run, c.context);
    NetworkModel variant = c.model;
    variant.pipes[0].material = "iron"; // extra one-hot category
    variant.junctions[0].zone = "north";
    auto space2 = compile_rules(parse_rules(kBothRules), variant);
    SeedResult res = seed_calibration(a, variant, space2);
    CHECK_FALSE(res.compatible());
    REQUIRE(res.mismatches.size() == 2);
    CHECK(res.mismatches[0].find("pipe feature layout differs") != std::string::npos);
    CHECK(res.mismatches[1].find("junction feature layout differs") != std::string::npos);
}

TEST_CASE("the archived genome reproduces its fitness when used as a seed") {
    // flow-only problem: the phase context (frozen values) of a fresh run is
    // identical to the one the archived fitness was measured in
    auto truth = grid();
    NetworkModel model = truth;
    for (auto& j : model.junctions)
        if (j.base_demand_lps > 0.0) j.base_demand_lps = 0.65;
    const char* demand_only =
        "rule dem\nmatch junction\nparam base_demand\nbounds 0.3 0.8\nend\n";
    auto space = compile_rules(parse_rules(demand_only), model);
    SensorSet sensors;
    sensors.flow_sensors = {"P1", "P2", "P3"};
    auto meas = truth_measurements(truth, sensors);

    NeatConfig neat;
    neat.population_size = 16;
    neat.max_generations = 5;
    neat.fitness_threshold = 1e-9;
    neat.seed = 9;
    LoopConfig loop;
    loop.outer_iterations = 1;
    auto run = calibrate(model, space, meas, sensors, neat, loop);
    REQUIRE(run.flow_genome.has_value());
    REQUIRE(!run.flow_history.empty());
    const double archived_best = run.flow_history.back().back();

    ArchiveContext ctx;
    ctx.created_at = "t";
    ctx.model_fingerprint = model_fingerprint(model);
    ctx.schema = build_features(model).schema;
    auto [fs, ps] = group_parameters(space);
    ctx.flow_kinds = output_kinds(fs);
    ctx.pressure_kinds = output_kinds(ps);
    ctx.neat = neat;
    ctx.loop = loop;
    RunArchive a = load_archive(save_archive(make_archive(run, ctx)));
    SeedResult seed = seed_calibration(a, model, space);
    REQUIRE(seed.compatible());
    REQUIRE(seed.flow.has_value());

    // the seed's own fitness in that context equals the archived best
    auto features = build_features(model);
    ParameterVector frozen;
    for (const auto& s : space.specs) frozen.values.push_back(prior_midpoint(s));
    double refit = phase_fitness(*seed.flow, Phase::flow, frozen, model, space, features,
                                 meas, sensors, Objective{});
    CHECK(refit == doctest::Approx(archived_best).epsilon(1e-9));

    // and a seeded rerun starts at or below it in generation 0
    NeatConfig cfg2 = neat;
    cfg2.seed = 1234;
    cfg2.max_generations = 1;
    auto fit = [&](const Genome& g) {
        return phase_fitness(g, Phase::flow, frozen, model, space, features, meas, sensors,
                             Objective{});
    };
    NeatResult gen0 = run_neat(seed.flow->n_inputs, seed.flow->n_outputs, fit, cfg2,
                               &*seed.flow);
    CHECK(gen0.history.front() <= archived_best + 1e-9);
}
