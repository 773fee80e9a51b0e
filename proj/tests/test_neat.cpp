#include <doctest.h>

#include <cmath>

#include "aquacal/neat.hpp"
#include "neat_check.hpp"

using namespace aquacal;

namespace {

NeatConfig quiet_config() {
    NeatConfig c;
    c.population_size = 20;
    c.add_connection_rate = 0;
    c.add_node_rate = 0;
    c.remove_connection_rate = 0;
    c.remove_node_rate = 0;
    c.weight_perturb_rate = 0;
    c.weight_replace_rate = 0;
    return c;
}

Genome two_node_genome(double weight, Activation out_act) {
    Genome g;
    g.n_inputs = 1;
    g.n_outputs = 1;
    g.nodes = {{0, NodeRole::input, Activation::clamped},
               {1, NodeRole::output, out_act}};
    g.connections = {{0, 0, 1, weight, true}};
    return g;
}

double xor_fitness(const Genome& g) {
    static const double px[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    static const double py[4] = {0, 1, 1, 0};
    double se = 0.0;
    for (int k = 0; k < 4; ++k) {
        auto out = activate(g, {px[k][0], px[k][1]});
        double pred = (out[0] + 1.0) / 2.0;
        se += (pred - py[k]) * (pred - py[k]);
    }
    return std::sqrt(se / 4.0);
}

} // namespace

TEST_CASE("initial population is fully connected with no hidden nodes") {
    NeatConfig cfg;
    cfg.population_size = 100;
    auto pop = initial_population(3, 2, cfg);
    CHECK(pop.genomes.size() == 100);
    for (const auto& g : pop.genomes) {
        CHECK(g.connections.size() == 6);
        CHECK(g.hidden_count() == 0);
        CHECK(testing::genome_flaw(g).empty());
        for (const auto& c : g.connections) {
            CHECK(c.weight >= -1.0);
            CHECK(c.weight <= 1.0);
        }
    }
    // innovation numbering is shared across the generation
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(pop.genomes[1].connections[i].innovation ==
              pop.genomes[0].connections[i].innovation);
}

TEST_CASE("seeded population preserves topology") {
    NeatConfig cfg;
    cfg.population_size = 10;
    auto base = initial_population(3, 2, cfg);
    Genome seed = base.genomes[0];
    InnovationRegistry& reg = base.registry;
    Rng rng(7);
    NeatConfig grow = cfg;
    grow.add_node_rate = 1.0;
    grow.add_connection_rate = 0.0;
    grow.remove_connection_rate = 0.0;
    grow.remove_node_rate = 0.0;
    grow.weight_perturb_rate = 0.0;
    grow.weight_replace_rate = 0.0;
    for (int i = 0; i < 4; ++i) mutate(seed, grow, reg, rng);
    REQUIRE(seed.hidden_count() == 4);
    seed.fitness = 1.0;

    auto pop = initial_population(3, 2, cfg, &seed);
    CHECK(pop.genomes.size() == 10);
    for (const auto& g : pop.genomes) {
        CHECK(g.hidden_count() == 4);
        CHECK(g.connections.size() == seed.connections.size());
        CHECK(!g.fitness.has_value());
        CHECK(testing::genome_flaw(g).empty());
    }

    // first member is the seed itself; the rest carry perturbed weights
    for (std::size_t c = 0; c < seed.connections.size(); ++c)
        CHECK(pop.genomes[0].connections[c].weight == seed.connections[c].weight);
    bool any_differs = false;
    for (std::size_t c = 0; c < seed.connections.size(); ++c)
        if (pop.genomes[1].connections[c].weight != seed.connections[c].weight)
            any_differs = true;
    CHECK(any_differs);

    Genome wrong = seed;
    wrong.n_inputs = 5;
    CHECK_THROWS_AS(initial_population(3, 2, cfg, &wrong), SchemaError);
}

TEST_CASE("activate matches the stated fixed points") {
    Genome g;
    g.n_inputs = 2;
    g.n_outputs = 2;
    g.nodes = {{0, NodeRole::input, Activation::clamped},
               {1, NodeRole::input, Activation::clamped},
               {2, NodeRole::output, Activation::sigmoid},
               {3, NodeRole::output, Activation::sigmoid}};
    g.connections = {{0, 0, 2, 0.0, true}, {1, 0, 3, 0.0, true},
                     {2, 1, 2, 0.0, true}, {3, 1, 3, 0.0, true}};
    auto out = activate(g, {0.3, -0.8});
    REQUIRE(out.size() == 2);
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(out[1] == doctest::Approx(0.5));

    auto clamped = two_node_genome(1.0, Activation::clamped);
    CHECK(activate(clamped, {2.0})[0] == doctest::Approx(1.0));
    CHECK(activate(clamped, {-5.0})[0] == doctest::Approx(-1.0));
    CHECK(activate(clamped, {0.25})[0] == doctest::Approx(0.25));

    CHECK_THROWS_AS(activate(clamped, {1.0, 2.0}), SchemaError);
}

TEST_CASE("disabled connections contribute nothing") {
    auto g = two_node_genome(1.0, Activation::clamped);
    g.connections[0].enabled = false;
    CHECK(activate(g, {0.7})[0] == doctest::Approx(0.0)); // clamped(0)
}

TEST_CASE("activate agrees with the relaxation oracle on random genomes") {
    NeatConfig cfg;
    cfg.population_size = 2;
    cfg.add_node_rate = 0.6;
    cfg.add_connection_rate = 0.8;
    cfg.remove_connection_rate = 0.2;
    cfg.remove_node_rate = 0.1;
    Rng rng(42);
    auto pop = initial_population(4, 3, cfg);
    Genome g = pop.genomes[0];
    for (int step = 0; step < 60; ++step) {
        mutate(g, cfg, pop.registry, rng);
        REQUIRE(testing::genome_flaw(g).empty());
        std::vector<double> in = {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1),
                                  rng.uniform(0, 1)};
        auto fast = activate(g, in);
        auto slow = testing::relax_activate(g, in);
        REQUIRE(fast.size() == slow.size());
        for (std::size_t i = 0; i < fast.size(); ++i)
            CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
    }
    CHECK(g.nodes.size() >= 20); // exercise genuinely deep genomes
}

TEST_CASE("add-node follows the split convention") {
    Genome g = two_node_genome(0.7, Activation::clamped);
    InnovationRegistry reg;
    reg.bump_counters(2, 1);
    Rng rng(1);
    NeatConfig cfg = quiet_config();
    cfg.add_node_rate = 1.0;
    mutate(g, cfg, reg, rng);
    REQUIRE(g.nodes.size() == 3);
    REQUIRE(g.connections.size() == 3);
    CHECK_FALSE(g.connections[0].enabled); // original 0->1
    const ConnectionGene* in = g.find_connection(0, 2);
    const ConnectionGene* out = g.find_connection(2, 1);
    REQUIRE(in);
    REQUIRE(out);
    CHECK(in->weight == 1.0);
    CHECK(out->weight == 0.7);
    CHECK(in->enabled);
    CHECK(out->enabled);
    CHECK(g.find_node(2)->role == NodeRole::hidden);
    CHECK(g.find_node(2)->activation == Activation::sigmoid);
}

TEST_CASE("all-zero rates leave the genome unchanged") {
    Genome g = two_node_genome(0.7, Activation::clamped);
    Genome before = g;
    InnovationRegistry reg;
    Rng rng(5);
    mutate(g, quiet_config(), reg, rng);
    CHECK(g.connections.size() == before.connections.size());
    CHECK(g.nodes.size() == before.nodes.size());
    CHECK(g.connections[0].weight == before.connections[0].weight);
}

TEST_CASE("same split in one generation reuses ids, next generation does not") {
    InnovationRegistry reg;
    reg.bump_counters(2, 1);
    auto a = reg.split(0, 0, 1);
    auto b = reg.split(0, 0, 1);
    CHECK(a.node_id == b.node_id);
    CHECK(a.in_innovation == b.in_innovation);
    reg.begin_generation();
    auto c = reg.split(0, 0, 1);
    CHECK(c.node_id != a.node_id); // counters keep moving forward
    CHECK(c.in_innovation > a.out_innovation);
}

TEST_CASE("long mutation chains never break genome invariants") {
    NeatConfig cfg;
    cfg.population_size = 2;
    cfg.add_node_rate = 0.4;
    cfg.add_connection_rate = 0.7;
    cfg.remove_connection_rate = 0.4;
    cfg.remove_node_rate = 0.2;
    Rng rng(2024);
    auto pop = initial_population(3, 2, cfg);
    int checked = 0;
    for (int chain = 0; chain < 400; ++chain) {
        Genome g = pop.genomes[0];
        pop.registry.begin_generation();
        for (int step = 0; step < 50; ++step) {
            mutate(g, cfg, pop.registry, rng);
            auto flaw = testing::genome_flaw(g);
            if (!flaw.empty()) FAIL("chain ", chain, " step ", step, ": ", flaw);
            ++checked;
        }
    }
    CHECK(checked == 20000);
}

TEST_CASE("crossover of identical parents reproduces them") {
    auto pop = initial_population(3, 2, NeatConfig{});
    Genome a = pop.genomes[0];
    a.fitness = 1.0;
    Rng rng(3);
    Genome child = crossover(a, a, rng);
    REQUIRE(child.connections.size() == a.connections.size());
    for (std::size_t i = 0; i < a.connections.size(); ++i) {
        CHECK(child.connections[i].weight == a.connections[i].weight);
        CHECK(child.connections[i].enabled == a.connections[i].enabled);
    }
}

TEST_CASE("fitter parent contributes its excess genes") {
    NeatConfig cfg;
    cfg.population_size = 2;
    auto pop = initial_population(2, 1, cfg);
    Genome a = pop.genomes[0];
    Genome b = pop.genomes[1];
    NeatConfig grow = quiet_config();
    grow.add_node_rate = 1.0;
    Rng rng(11);
    mutate(a, grow, pop.registry, rng);
    REQUIRE(a.connections.size() == 4); // one disabled + two from the split
    a.fitness = 0.5;
    b.fitness = 2.0;
    Genome child = crossover(a, b, rng);
    CHECK(child.connections.size() == 4);
    CHECK(child.nodes.size() == a.nodes.size());

    // the less fit parent's extras are dropped
    Genome child2 = crossover(b, a, rng);
    CHECK(child2.connections.size() == 4); // a still fitter regardless of order

    b.fitness = 0.1;
    Genome child3 = crossover(a, b, rng);
    CHECK(child3.connections.size() == 2); // b fitter, a's extras dropped
}

TEST_CASE("crossover requires fitness") {
    auto pop = initial_population(2, 1, NeatConfig{});
    Rng rng(1);
    CHECK_THROWS_AS(crossover(pop.genomes[0], pop.genomes[1], rng), SchemaError);
}

TEST_CASE("random crossovers keep invariants") {
    NeatConfig cfg;
    cfg.population_size = 30;
    cfg.add_node_rate = 0.5;
    cfg.add_connection_rate = 0.7;
    cfg.remove_connection_rate = 0.3;
    cfg.remove_node_rate = 0.15;
    Rng rng(77);
    auto pop = initial_population(3, 2, cfg);
    std::vector<Genome> mixed = pop.genomes;
    for (auto& g : mixed) {
        for (int s = 0; s < 6; ++s) mutate(g, cfg, pop.registry, rng);
        g.fitness = rng.uniform(0, 10);
    }
    for (int k = 0; k < 1000; ++k) {
        const Genome& a = mixed[rng.next_below(mixed.size())];
        const Genome& b = mixed[rng.next_below(mixed.size())];
        Genome child = crossover(a, b, rng);
        auto flaw = testing::genome_flaw(child);
        if (!flaw.empty()) FAIL("crossover ", k, ": ", flaw);
    }
}

TEST_CASE("compatibility distance") {
    NeatConfig cfg; // c1=c2=1, c3=0.4
    auto pop = initial_population(3, 2, cfg);
    const Genome& g = pop.genomes[0];
    CHECK(compatibility_distance(g, g, cfg) == 0.0);

    // one matching weight differs by delta; small genomes use N=1
    Genome h = g;
    h.connections[2].weight += 1.5;
    double expect = cfg.c3 * 1.5 / 6.0;
    CHECK(compatibility_distance(g, h, cfg) == doctest::Approx(expect));
    CHECK(compatibility_distance(h, g, cfg) ==
          doctest::Approx(compatibility_distance(g, h, cfg)));

    // disjoint + excess with N=1
    Genome d = g;
    d.connections.push_back({40, 0, 4, 0.0, true});
    Genome e = g;
    e.connections.push_back({41, 1, 4, 0.0, true});
    // innovations 40 vs 41: 40 is disjoint (within e's range? no: e max=41, 40<41 and absent -> disjoint), 41 is excess
    double de = compatibility_distance(d, e, cfg);
    CHECK(de == doctest::Approx(cfg.c1 * 1.0 + cfg.c2 * 1.0));

    // at >= 20 genes the divisor switches to the larger gene count
    Genome big_a, big_b;
    big_a.n_inputs = big_b.n_inputs = 1;
    big_a.n_outputs = big_b.n_outputs = 1;
    big_a.nodes = big_b.nodes = {{0, NodeRole::input, Activation::clamped},
                                 {1, NodeRole::output, Activation::clamped}};
    for (int i = 0; i < 25; ++i)
        big_a.connections.push_back({i, 0, 1, 0.0, true});
    for (int i = 0; i < 20; ++i)
        big_b.connections.push_back({i, 0, 1, 0.5, true});
    // matching 20 with |dw| 0.5, excess 5, N = 25
    double big = compatibility_distance(big_a, big_b, cfg);
    CHECK(big == doctest::Approx(1.0 * 5.0 / 25.0 + 0.4 * 0.5));
}

TEST_CASE("constant fitness preserves population size and best") {
    NeatConfig cfg;
    cfg.population_size = 30;
    cfg.seed = 9;
    auto pop = initial_population(3, 2, cfg);
    auto flat = [](const Genome&) { return 5.0; };
    for (int gen = 0; gen < 5; ++gen) {
        evolve_generation(pop, flat, cfg);
        CHECK(pop.genomes.size() == 30);
        CHECK(*pop.best_ever->fitness == 5.0);
    }
}

TEST_CASE("best-ever fitness is monotone under elitism") {
    NeatConfig cfg;
    cfg.population_size = 40;
    cfg.seed = 17;
    cfg.elitism = 1;
    auto pop = initial_population(2, 1, cfg);
    double prev = 1e18;
    for (int gen = 0; gen < 20; ++gen) {
        evolve_generation(pop, xor_fitness, cfg);
        double best = *pop.best_ever->fitness;
        CHECK(best <= prev);
        prev = best;
        for (const auto& g : pop.genomes)
            if (g.fitness) // elites carry fitness; verify one is at best
                CHECK(*g.fitness >= best);
    }
}

TEST_CASE("every genome in evolved generations satisfies invariants") {
    NeatConfig cfg;
    cfg.population_size = 40;
    cfg.seed = 4;
    auto pop = initial_population(2, 1, cfg);
    for (int gen = 0; gen < 12; ++gen) {
        evolve_generation(pop, xor_fitness, cfg);
        for (const auto& g : pop.genomes) {
            auto flaw = testing::genome_flaw(g);
            if (!flaw.empty()) FAIL("gen ", gen, ": ", flaw);
        }
        std::size_t covered = 0;
        for (const auto& s : pop.species) covered += s.members.size();
        CHECK(covered == pop.genomes.size());
    }
}

TEST_CASE("trajectory is bit-identical across thread counts") {
    NeatConfig cfg;
    cfg.population_size = 30;
    cfg.seed = 123;
    cfg.max_generations = 8;
    cfg.fitness_threshold = 0.0;
    auto r1 = run_neat(2, 1, xor_fitness, cfg, nullptr, 1);
    auto r3 = run_neat(2, 1, xor_fitness, cfg, nullptr, 3);
    REQUIRE(r1.history.size() == r3.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i)
        CHECK(r1.history[i] == r3.history[i]);
    CHECK(serialize_genome(r1.best) == serialize_genome(r3.best));

    auto r1b = run_neat(2, 1, xor_fitness, cfg, nullptr, 1);
    CHECK(serialize_genome(r1.best) == serialize_genome(r1b.best));
}

TEST_CASE("xor-style task improves on the initial generation in 9 of 10 seeds") {
    int improved = 0;
    for (int seed = 0; seed < 10; ++seed) {
        NeatConfig cfg;
        cfg.population_size = 60;
        cfg.max_generations = 40;
        cfg.fitness_threshold = 0.0;
        cfg.seed = std::uint64_t(seed) * 1000 + 1;
        auto gen0 = initial_population(2, 1, cfg);
        double best0 = 1e18;
        for (const auto& g : gen0.genomes) best0 = std::min(best0, xor_fitness(g));
        auto res = run_neat(2, 1, xor_fitness, cfg);
        if (res.history.back() < best0) ++improved;
    }
    CHECK(improved >= 9);
}

TEST_CASE("genome serialization round trips exactly") {
    NeatConfig cfg;
    cfg.population_size = 2;
    cfg.add_node_rate = 0.6;
    cfg.add_connection_rate = 0.8;
    Rng rng(31);
    auto pop = initial_population(3, 2, cfg);
    Genome g = pop.genomes[0];
    for (int i = 0; i < 10; ++i) mutate(g, cfg, pop.registry, rng);
    g.connections[0].weight = -0.1; // not exactly representable
    g.connections[1].enabled = false;

    auto text = serialize_genome(g);
    Genome back = parse_genome(text);
    CHECK(back.n_inputs == 3);
    CHECK(back.n_outputs == 2);
    REQUIRE(back.connections.size() == g.connections.size());
    for (std::size_t i = 0; i < g.connections.size(); ++i) {
        CHECK(back.connections[i].weight == g.connections[i].weight);
        CHECK(back.connections[i].innovation == g.connections[i].innovation);
        CHECK(back.connections[i].enabled == g.connections[i].enabled);
    }
    CHECK(serialize_genome(back) == text);

    CHECK_THROWS_AS(parse_genome("node 0 input clamped\nnode 0 input clamped\n"),
                    SchemaError);
    CHECK_THROWS_AS(parse_genome("conn 0 5 6 0x1p+0 1\n"), SchemaError);
    CHECK_THROWS_AS(parse_genome("widget 1\n"), SchemaError);
}
