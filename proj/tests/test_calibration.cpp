#include <doctest.h>

#include <cmath>

#include "aquacal/calibration.hpp"
#include "aquacal/inp.hpp"
#include "aquacal/rules.hpp"
#include "fixtures.hpp"
#include "objective_oracle.hpp"

using namespace aquacal;

namespace {

NetworkModel grid() { return parse_inp(testing::grid_fixture_inp()).model; }

// Flow sensors meter the high-flow mains near the source; interior pipes
// carry so little water that their per-sensor std normalization would blow
// tiny absolute errors out of proportion.
SensorSet grid_sensors() {
    SensorSet s;
    s.flow_sensors = {"P1", "P2", "P3"};
    s.pressure_sensors = {"J11", "J33", "J55"};
    s.holdout_flow = {"P4"};
    s.holdout_pressure = {"J42"};
    return s;
}

const char* kBothRules =
    "rule rough\nmatch pipe\nparam roughness\nbounds 0.0005 0.004\nend\n"
    "rule dem\nmatch junction\nparam base_demand\nbounds 0.3 0.8\nend\n";

// Genome whose output i is clamp(w[i]) regardless of the element: one
// connection from the const_1 input to each output.
Genome const_genome(int n_in, const std::vector<double>& w) {
    Genome g;
    g.n_inputs = n_in;
    g.n_outputs = int(w.size());
    for (int i = 0; i < n_in; ++i)
        g.nodes.push_back({i, NodeRole::input, Activation::clamped});
    for (std::size_t i = 0; i < w.size(); ++i) {
        g.nodes.push_back({n_in + int(i), NodeRole::output, Activation::clamped});
        g.connections.push_back({int(i), 0, n_in + int(i), w[i], true});
    }
    return g;
}

MeasurementSet truth_measurements(const NetworkModel& truth, const SensorSet& sensors) {
    auto sim = simulate_eps(truth);
    auto obs = extract_observations(sim, sensors, true);
    return observations_to_measurements(obs);
}

ObservationSet single_flow_obs(const std::vector<double>& times,
                               const std::vector<double>& values) {
    ObservationSet o;
    o.timestamps = times;
    o.flow["P1"] = values;
    return o;
}

} // namespace

TEST_CASE("grid features are normalized with the documented layout") {
    auto fs = build_features(grid());
    std::vector<std::string> pipe_names;
    for (const auto& d : fs.schema.pipe) pipe_names.push_back(d.name);
    CHECK(pipe_names == std::vector<std::string>{"const_1", "length_norm", "diameter_norm",
                                                 "degree_from_norm", "degree_to_norm",
                                                 "mid_elevation_norm", "material=PE"});
    std::vector<std::string> junction_names;
    for (const auto& d : fs.schema.junction) junction_names.push_back(d.name);
    CHECK(junction_names == std::vector<std::string>{"const_1", "elevation_norm", "degree_norm",
                                                     "base_demand_norm", "zone=west"});
    for (const auto& [id, v] : fs.pipe_vectors) {
        REQUIRE(v.size() == 7);
        CHECK(v[0] == 1.0);
        CHECK(v[1] == 0.5); // every pipe is 100 m
        CHECK(v[2] == 0.5); // every pipe is 100 mm
        for (double x : v) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
    }
    CHECK(fs.pipe_vectors.at("P1").back() == 1.0); // the only PE pipe
    CHECK(fs.pipe_vectors.at("P2").back() == 0.0);
    CHECK(fs.junction_vectors.at("J00").back() == 1.0); // the only tagged zone
    CHECK(fs.junction_vectors.at("J01").back() == 0.0);
    for (const auto& [id, v] : fs.junction_vectors)
        for (double x : v) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
}

TEST_CASE("degree features use the network-wide degree range") {
    // Hub of degree 6, leaves of degree 1; A has 3 incident links.
    std::string inp =
        "[TITLE]\nstar\n\n[JUNCTIONS]\n"
        "HUB\t10\t0.1\nA\t10\t0.1\nB\t10\t0.1\nC\t10\t0.1\nD\t10\t0.1\nE\t10\t0.1\n\n"
        "[RESERVOIRS]\nR1\t50\n\n[PIPES]\n"
        "P1\tR1\tHUB\t100\t100\t0.0015\t0\tOpen\n"
        "P2\tHUB\tA\t100\t100\t0.0015\t0\tOpen\n"
        "P3\tHUB\tB\t100\t100\t0.0015\t0\tOpen\n"
        "P4\tHUB\tC\t100\t100\t0.0015\t0\tOpen\n"
        "P5\tHUB\tD\t100\t100\t0.0015\t0\tOpen\n"
        "P6\tHUB\tE\t100\t100\t0.0015\t0\tOpen\n"
        "P7\tA\tB\t100\t100\t0.0015\t0\tOpen\n"
        "P8\tA\tC\t100\t100\t0.0015\t0\tOpen\n\n"
        "[OPTIONS]\nUnits\tLPS\n\n[END]\n";
    auto fs = build_features(parse_inp(inp).model);
    // layout: const_1, elevation_norm, degree_norm, base_demand_norm
    CHECK(fs.junction_vectors.at("A")[2] == doctest::Approx(0.4)); // (3-1)/(6-1)
    CHECK(fs.junction_vectors.at("HUB")[2] == doctest::Approx(1.0));
    CHECK(fs.junction_vectors.at("D")[2] == doctest::Approx(0.0));
    CHECK(fs.junction_vectors.at("A")[1] == 0.5); // constant elevations
    CHECK(fs.junction_vectors.at("A")[3] == 0.5); // constant demands
}

TEST_CASE("length feature hits the unit interval ends") {
    std::string inp =
        "[TITLE]\nchain\n\n[JUNCTIONS]\nA\t10\t0.2\nB\t10\t0.2\nC\t10\t0.2\n\n"
        "[RESERVOIRS]\nR1\t50\n\n[PIPES]\n"
        "P1\tR1\tA\t50\t100\t0.0015\t0\tOpen\n"
        "P2\tA\tB\t100\t100\t0.0015\t0\tOpen\n"
        "P3\tB\tC\t180\t100\t0.0015\t0\tOpen\n\n"
        "[OPTIONS]\nUnits\tLPS\n\n[END]\n";
    auto fs = build_features(parse_inp(inp).model);
    CHECK(fs.pipe_vectors.at("P1")[1] == 0.0);
    CHECK(fs.pipe_vectors.at("P3")[1] == 1.0);
    CHECK(fs.pipe_vectors.at("P2")[1] == doctest::Approx(50.0 / 130.0));
}

TEST_CASE("feature schema serialization is stable") {
    auto a = build_features(grid()).schema.serialize();
    auto b = build_features(grid()).schema.serialize();
    CHECK(a == b);
    CHECK(a.find("pipe length_norm 100 100") != std::string::npos);
    CHECK(fingerprint_hex(a) == fingerprint_hex(b));
    CHECK_THROWS_AS(build_features(grid()).vector_for(ElementKind::pipe, "nope"), ModelError);
}

TEST_CASE("decode maps clamped outputs onto the bounds") {
    auto model = grid();
    auto space = compile_rules(
        parse_rules("rule r\nmatch pipe\nparam roughness\nbounds 10 30\nend\n"), model);
    REQUIRE(space.size() == 58);
    auto fs = build_features(model);
    int width = feature_width(space.specs, fs.schema);
    CHECK(width == 7);

    for (double v : decode(const_genome(width, {-5.0}), space.specs, fs)) CHECK(v == 10.0);
    for (double v : decode(const_genome(width, {5.0}), space.specs, fs)) CHECK(v == 30.0);
    for (double v : decode(const_genome(width, {0.0}), space.specs, fs)) CHECK(v == 20.0);
}

TEST_CASE("decode assigns output slots in parameter-kind order") {
    auto model = grid();
    auto space = compile_rules(
        parse_rules("rule d\nmatch junction\nparam base_demand\nbounds 0.3 0.8\nend\n"
                    "rule l\nmatch junction\nparam leak_coeff\nbounds 0 0.2\nend\n"),
        model);
    REQUIRE(space.size() == 72);
    auto fs = build_features(model);
    auto kinds = output_kinds(space.specs);
    REQUIRE(kinds == std::vector<ParameterKind>{ParameterKind::base_demand,
                                                ParameterKind::leak_coeff});
    int width = feature_width(space.specs, fs.schema);
    CHECK(width == 5);
    auto vals = decode(const_genome(width, {5.0, -5.0}), space.specs, fs);
    for (std::size_t i = 0; i < space.size(); ++i) {
        if (space.specs[i].parameter == ParameterKind::base_demand)
            CHECK(vals[i] == 0.8);
        else
            CHECK(vals[i] == 0.0);
    }
}

TEST_CASE("decode stays within bounds for arbitrary genomes") {
    auto model = grid();
    auto space = compile_rules(
        parse_rules("rule r\nmatch pipe\nparam roughness\nbounds 0.0005 0.004\nend\n"), model);
    auto fs = build_features(model);
    NeatConfig cfg;
    cfg.population_size = 2;
    cfg.add_node_rate = 0.5;
    cfg.add_connection_rate = 0.7;
    auto pop = initial_population(7, 1, cfg);
    Rng rng(8);
    Genome g = pop.genomes[0];
    for (int step = 0; step < 40; ++step) {
        mutate(g, cfg, pop.registry, rng);
        for (double v : decode(g, space.specs, fs)) {
            CHECK(v >= 0.0005);
            CHECK(v <= 0.004);
        }
    }
}

TEST_CASE("decode rejects schema mismatches") {
    auto model = grid();
    auto space = compile_rules(
        parse_rules("rule r\nmatch pipe\nparam roughness\nbounds 10 30\nend\n"), model);
    auto fs = build_features(model);
    CHECK_THROWS_AS(decode(const_genome(7, {1.0, 1.0}), space.specs, fs), SchemaError);
    CHECK_THROWS_AS(decode(const_genome(3, {1.0}), space.specs, fs), SchemaError);
}

TEST_CASE("objective fixed points") {
    auto sim = single_flow_obs({0, 3600, 7200}, {2, 3, 4});
    MeasurementSet same;
    same.flow["P1"] = {{0, 3600, 7200}, {2, 3, 4}};
    for (auto kind : {ObjectiveKind::rmse, ObjectiveKind::mae})
        CHECK(evaluate_objective(sim, same, {kind, Normalization::raw}) == 0.0);
    CHECK(evaluate_objective(sim, same, {ObjectiveKind::nse, Normalization::raw}) ==
          doctest::Approx(-1.0));

    MeasurementSet off;
    off.flow["P1"] = {{0, 3600, 7200}, {1, 2, 3}};
    CHECK(evaluate_objective(sim, off, {ObjectiveKind::rmse, Normalization::raw}) ==
          doctest::Approx(1.0));
    CHECK(evaluate_objective(sim, off, {ObjectiveKind::mae, Normalization::raw}) ==
          doctest::Approx(1.0));
    // per sensor: num = 3, den = 2, nse = -0.5, negated
    CHECK(evaluate_objective(sim, off, {ObjectiveKind::nse, Normalization::raw}) ==
          doctest::Approx(0.5));
}

TEST_CASE("objective matches the direct-formula oracle") {
    Rng rng(99);
    ObservationSet sim;
    MeasurementSet obs;
    std::vector<testing::SeriesPair> pairs;
    for (int t = 0; t < 100; ++t) sim.timestamps.push_back(t * 300.0);
    auto add = [&](const std::string& id, bool flow) {
        testing::SeriesPair p;
        for (int t = 0; t < 100; ++t) {
            p.obs.push_back(rng.uniform(-3, 9));
            p.sim.push_back(p.obs.back() + rng.gaussian(0, 0.7));
        }
        if (flow) {
            sim.flow[id] = p.sim;
            obs.flow[id] = {sim.timestamps, p.obs};
        } else {
            sim.pressure[id] = p.sim;
            obs.pressure[id] = {sim.timestamps, p.obs};
        }
        pairs.push_back(std::move(p));
    };
    add("P1", true);
    add("P2", true);
    add("J1", false);
    add("J2", false);

    // map iteration visits P1,P2 then J1,J2: same order as insertion above
    for (auto [kind, name] : {std::pair{ObjectiveKind::rmse, "rmse"},
                              std::pair{ObjectiveKind::mae, "mae"},
                              std::pair{ObjectiveKind::nse, "nse"}})
        for (bool normalized : {false, true}) {
            auto norm = normalized ? Normalization::per_sensor_std : Normalization::raw;
            double got = evaluate_objective(sim, obs, {kind, norm});
            double want = testing::oracle_objective(name, normalized, pairs);
            CHECK(got == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("rmse and mae ignore how pairs are distributed over sensors") {
    ObservationSet sim1, sim2;
    sim1.timestamps = sim2.timestamps = {0, 60, 120};
    MeasurementSet obs1, obs2;
    sim1.flow["A"] = {1, 2, 3};
    sim1.flow["B"] = {4, 6, 8};
    obs1.flow["A"] = {{0, 60, 120}, {1.5, 2, 2}};
    obs1.flow["B"] = {{0, 60, 120}, {4, 5, 9}};
    // swap the two series between sensors
    sim2.flow["A"] = {4, 6, 8};
    sim2.flow["B"] = {1, 2, 3};
    obs2.flow["A"] = {{0, 60, 120}, {4, 5, 9}};
    obs2.flow["B"] = {{0, 60, 120}, {1.5, 2, 2}};
    for (auto kind : {ObjectiveKind::rmse, ObjectiveKind::mae})
        CHECK(evaluate_objective(sim1, obs1, {kind, Normalization::raw}) ==
              evaluate_objective(sim2, obs2, {kind, Normalization::raw}));
}

TEST_CASE("per-sensor normalization rescales each sensor by its spread") {
    ObservationSet sim;
    sim.timestamps = {0, 60};
    sim.flow["A"] = {1, 3};
    sim.flow["B"] = {10, 30};
    MeasurementSet obs;
    obs.flow["A"] = {{0, 60}, {0, 2}};   // std 1, residuals 1,1
    obs.flow["B"] = {{0, 60}, {0, 20}};  // std 10, residuals 10,10
    CHECK(evaluate_objective(sim, obs, {ObjectiveKind::rmse, Normalization::per_sensor_std}) ==
          doctest::Approx(1.0));
    CHECK(evaluate_objective(sim, obs, {ObjectiveKind::rmse, Normalization::raw}) ==
          doctest::Approx(std::sqrt((1.0 + 1.0 + 100.0 + 100.0) / 4.0)));
}

TEST_CASE("objective error paths") {
    auto sim = single_flow_obs({0, 60}, {1, 2});
    MeasurementSet misaligned;
    misaligned.flow["P1"] = {{0, 90}, {1, 2}};
    CHECK_THROWS_AS(evaluate_objective(sim, misaligned, {}), ModelError);
    MeasurementSet unknown;
    unknown.flow["P9"] = {{0, 60}, {1, 2}};
    CHECK_THROWS_AS(evaluate_objective(sim, unknown, {}), ModelError);
    CHECK_THROWS_AS(evaluate_objective(sim, MeasurementSet{}, {}), ModelError);
}

TEST_CASE("measurement csv round trips") {
    auto model = grid();
    auto sim = simulate_eps(model);
    auto meas = observations_to_measurements(extract_observations(sim, grid_sensors(), true));
    auto text = measurements_to_csv(meas);
    auto back = parse_measurements_csv(text);
    REQUIRE(back.flow.size() == 4);
    REQUIRE(back.pressure.size() == 4);
    CHECK(back.flow.at("P1").times == meas.flow.at("P1").times);
    CHECK(back.flow.at("P1").values == meas.flow.at("P1").values);
    CHECK(back.pressure.at("J33").values == meas.pressure.at("J33").values);
    CHECK(measurements_to_csv(back) == text);
}

TEST_CASE("measurement csv rejects malformed input") {
    CHECK_THROWS_AS(parse_measurements_csv(""), ParseError);
    CHECK_THROWS_AS(parse_measurements_csv("a,b,c\n"), ParseError);
    const std::string h = "time_s,element_kind,element_id,quantity,value\n";
    CHECK_THROWS_AS(parse_measurements_csv(h + "0,pipe,P1,volume_l,1\n"), ParseError);
    CHECK_THROWS_AS(parse_measurements_csv(h + "0,junction,J1,flow_lps,1\n"), ParseError);
    CHECK_THROWS_AS(parse_measurements_csv(h + "0,pipe,P1,pressure_m,1\n"), ParseError);
    CHECK_THROWS_AS(parse_measurements_csv(h + "x,pipe,P1,flow_lps,1\n"), ParseError);
    CHECK_THROWS_AS(parse_measurements_csv(h + "0,pipe,P1,flow_lps\n"), ParseError);
    CHECK_THROWS_AS(
        parse_measurements_csv(h + "60,pipe,P1,flow_lps,1\n60,pipe,P1,flow_lps,2\n"),
        ParseError);
}

TEST_CASE("sensor file round trips and validates") {
    auto text = sensor_file_text(grid_sensors());
    auto back = parse_sensor_file(text);
    CHECK(back.flow_sensors == grid_sensors().flow_sensors);
    CHECK(back.pressure_sensors == grid_sensors().pressure_sensors);
    CHECK(back.holdout_flow == grid_sensors().holdout_flow);
    CHECK(back.holdout_pressure == grid_sensors().holdout_pressure);
    CHECK(sensor_file_text(back) == text);

    CHECK(parse_sensor_file("# nothing\n\n").flow_sensors.empty());
    CHECK_THROWS_AS(parse_sensor_file("sensor flow\n"), ParseError);
    CHECK_THROWS_AS(parse_sensor_file("gauge flow P1\n"), ParseError);
    CHECK_THROWS_AS(parse_sensor_file("sensor depth P1\n"), ParseError);
    CHECK_THROWS_AS(parse_sensor_file("sensor flow P1\nholdout flow P1\n"), ParseError);
}

TEST_CASE("truth-generating genome scores zero fitness") {
    auto model = grid();
    // midpoint of the bounds is exactly the model's roughness
    auto space = compile_rules(
        parse_rules("rule r\nmatch pipe\nparam roughness\nbounds 0.0005 0.0025\nend\n"), model);
    auto fs = build_features(model);
    auto sensors = grid_sensors();
    auto meas = truth_measurements(model, sensors);
    ParameterVector frozen;
    for (const auto& s : space.specs) frozen.values.push_back(model_value(model, s));

    double fit = phase_fitness(const_genome(7, {0.0}), Phase::pressure, frozen, model, space, fs,
                               meas, sensors, {ObjectiveKind::rmse, Normalization::raw});
    CHECK(fit == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::abs(fit) < 1e-9);

    // an extreme decode still converges to a finite positive score
    double rough = phase_fitness(const_genome(7, {5.0}), Phase::pressure, frozen, model, space,
                                 fs, meas, sensors, {ObjectiveKind::rmse, Normalization::raw});
    CHECK(rough > 0.0);
    CHECK(rough < 1e6);
}

TEST_CASE("calibrate exits without evolution when the model already fits") {
    auto model = grid();
    auto space = compile_rules(
        parse_rules("rule r\nmatch pipe\nparam roughness\nbounds 0.0005 0.0025\nend\n"
                    "rule d\nmatch junction\nparam base_demand\nbounds 0.3 0.8\nend\n"),
        model);
    auto sensors = grid_sensors();
    auto meas = truth_measurements(model, sensors);
    NeatConfig cfg;
    cfg.population_size = 12;
    cfg.max_generations = 5;
    LoopConfig loop;
    auto run = calibrate(model, space, meas, sensors, cfg, loop);
    CHECK(run.calibration_objective < 1e-12);
    CHECK(run.validation_objective < 1e-12);
    CHECK(run.simulation_count == 2); // incumbent check + validation
    CHECK(run.outer_iterations == 0);
    CHECK(run.flow_history.empty());
    CHECK(run.pressure_history.empty());
    CHECK_FALSE(run.flow_genome.has_value());
    REQUIRE(run.final_vector.values.size() == 94);
    CHECK(run.final_vector.values[0] == 0.5);     // junction demands first
    CHECK(run.final_vector.values[36] == 0.0015); // then pipe roughness
}

TEST_CASE("calibrate is deterministic given seeds") {
    auto model = grid();
    auto space = compile_rules(parse_rules(kBothRules), model);
    NetworkModel truth = model;
    for (auto& p : truth.pipes) p.roughness = 0.003;
    for (auto& j : truth.junctions) j.base_demand_lps = 0.6;
    auto sensors = grid_sensors();
    auto meas = truth_measurements(truth, sensors);
    NeatConfig cfg;
    cfg.population_size = 10;
    cfg.max_generations = 3;
    cfg.fitness_threshold = 0.0;
    cfg.seed = 31;
    LoopConfig loop;
    loop.outer_iterations = 2;
    auto a = calibrate(model, space, meas, sensors, cfg, loop);
    auto b = calibrate(model, space, meas, sensors, cfg, loop);
    CHECK(a.final_vector.values == b.final_vector.values);
    CHECK(a.flow_history == b.flow_history);
    CHECK(a.pressure_history == b.pressure_history);
    CHECK(a.calibration_objective == b.calibration_objective);
    CHECK(a.validation_objective == b.validation_objective);
    CHECK(a.simulation_count == b.simulation_count);
    REQUIRE(a.flow_genome.has_value());
    REQUIRE(b.flow_genome.has_value());
    CHECK(serialize_genome(*a.flow_genome) == serialize_genome(*b.flow_genome));
    CHECK(serialize_genome(*a.pressure_genome) == serialize_genome(*b.pressure_genome));
}

TEST_CASE("calibrate improves a perturbed model") {
    auto model = grid();
    auto space = compile_rules(parse_rules(kBothRules), model);
    NetworkModel truth = model;
    for (auto& p : truth.pipes) p.roughness = 0.003;
    for (auto& j : truth.junctions) j.base_demand_lps = 0.6;
    auto sensors = grid_sensors();
    auto meas = truth_measurements(truth, sensors);

    // combined starting error, computed outside calibrate
    MeasurementSet calib_only = meas;
    calib_only.flow.erase("P4");
    calib_only.pressure.erase("J42");
    auto base_obs = extract_observations(simulate_eps(model), sensors, false);
    double initial = evaluate_objective(base_obs, calib_only,
                                        {ObjectiveKind::rmse, Normalization::per_sensor_std});
    REQUIRE(initial > 0.1);

    NeatConfig cfg;
    cfg.population_size = 32;
    cfg.max_generations = 14;
    cfg.fitness_threshold = 0.0;
    cfg.seed = 7;
    LoopConfig loop;
    loop.outer_iterations = 3;
    auto run = calibrate(model, space, meas, sensors, cfg, loop);
    CHECK(run.calibration_objective <= initial);
    CHECK(run.calibration_objective < 0.2 * initial);
    CHECK(std::isfinite(run.validation_objective));
    CHECK(run.validation_objective < 2.0 * run.calibration_objective + 1e-6);
    CHECK(run.warnings.empty());
    CHECK(run.flow_genome.has_value());
    CHECK(run.pressure_genome.has_value());
    CHECK(!run.flow_history.empty());
    CHECK(!run.pressure_history.empty());
    CHECK(run.simulation_count >= 2 * 32);
    CHECK(run.simulation_count <=
          std::size_t(1 + 3 * 2 * (32 * 14 + 1) + 1));
    CHECK(run.wall_time_s > 0.0);
    for (std::size_t i = 0; i < run.final_vector.values.size(); ++i) {
        CHECK(run.final_vector.values[i] >= space.specs[i].lo);
        CHECK(run.final_vector.values[i] <= space.specs[i].hi);
    }
}

TEST_CASE("missing sensor kind degrades to a single phase with a warning") {
    auto model = grid();
    auto space = compile_rules(parse_rules(kBothRules), model);
    NetworkModel truth = model;
    for (auto& p : truth.pipes) p.roughness = 0.003;
    SensorSet sensors;
    sensors.pressure_sensors = {"J11", "J33"};
    auto meas = truth_measurements(truth, sensors);
    NeatConfig cfg;
    cfg.population_size = 8;
    cfg.max_generations = 2;
    cfg.fitness_threshold = 0.0;
    LoopConfig loop;
    loop.outer_iterations = 1;
    auto run = calibrate(model, space, meas, sensors, cfg, loop);
    REQUIRE(run.warnings.size() == 1);
    CHECK(run.warnings[0].message.find("flow phase skipped") != std::string::npos);
    CHECK(run.flow_history.empty());
    CHECK(!run.pressure_history.empty());
    CHECK_FALSE(run.flow_genome.has_value());
}

TEST_CASE("degenerate holdout equal to the calibration set scores identically") {
    auto model = grid();
    auto space = compile_rules(parse_rules(kBothRules), model);
    NetworkModel truth = model;
    for (auto& p : truth.pipes) p.roughness = 0.0025;
    SensorSet sensors;
    sensors.flow_sensors = {"P1"};
    sensors.pressure_sensors = {"J33"};
    sensors.holdout_flow = {"P1"};
    sensors.holdout_pressure = {"J33"};
    auto meas = truth_measurements(truth, sensors);
    NeatConfig cfg;
    cfg.population_size = 8;
    cfg.max_generations = 2;
    cfg.fitness_threshold = 0.0;
    LoopConfig loop;
    loop.outer_iterations = 1;
    auto run = calibrate(model, space, meas, sensors, cfg, loop);
    CHECK(run.validation_objective == run.calibration_objective);
}

TEST_CASE("calibrate rejects unusable setups") {
    auto model = grid();
    auto space = compile_rules(parse_rules(kBothRules), model);
    auto sensors = grid_sensors();
    auto meas = truth_measurements(model, sensors);
    NeatConfig cfg;
    LoopConfig loop;

    CHECK_THROWS_AS(calibrate(model, ParameterSpace{}, meas, sensors, cfg, loop), ModelError);
    CHECK_THROWS_AS(calibrate(model, space, meas, SensorSet{}, cfg, loop), ModelError);

    // flow sensors only, but the space's only group is pressure
    auto pressure_space = compile_rules(
        parse_rules("rule r\nmatch pipe\nparam roughness\nbounds 0.0005 0.004\nend\n"), model);
    SensorSet flow_only;
    flow_only.flow_sensors = {"P1"};
    CHECK_THROWS_AS(calibrate(model, pressure_space, meas, flow_only, cfg, loop), ModelError);

    // declared calibration sensor without measurements
    SensorSet extra = sensors;
    extra.flow_sensors.push_back("P13");
    CHECK_THROWS_AS(calibrate(model, space, meas, extra, cfg, loop), ModelError);
}
