#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aquacal/common.hpp"
#include "aquacal/rng.hpp"

namespace aquacal {

enum class NodeRole { input, hidden, output };
enum class Activation { sigmoid, clamped };

struct NodeGene {
    int id = 0;
    NodeRole role = NodeRole::hidden;
    Activation activation = Activation::sigmoid;
};

struct ConnectionGene {
    int innovation = 0;
    int from = 0;
    int to = 0;
    double weight = 0.0;
    bool enabled = true;
};

// Feed-forward genome. Inputs occupy node ids [0, n_inputs), outputs
// [n_inputs, n_inputs + n_outputs); hidden ids come from the registry.
struct Genome {
    int n_inputs = 0;
    int n_outputs = 0;
    std::vector<NodeGene> nodes;             // sorted by id
    std::vector<ConnectionGene> connections; // sorted by innovation
    std::optional<double> fitness;           // minimized

    const NodeGene* find_node(int id) const;
    const ConnectionGene* find_connection(int from, int to) const;
    int hidden_count() const;
};

// Tracks structural events so that identical mutations within one generation
// receive identical ids; counters persist across generations.
class InnovationRegistry {
public:
    struct SplitIds {
        int node_id;
        int in_innovation;
        int out_innovation;
    };

    int connection_innovation(int from, int to);
    SplitIds split(int connection_innovation, int from, int to);
    void begin_generation();
    void bump_counters(int min_next_node, int min_next_innovation);
    int next_node_id() const { return next_node_id_; }

private:
    std::map<std::pair<int, int>, int> connection_events_;
    std::map<int, SplitIds> split_events_;
    int next_innovation_ = 0;
    int next_node_id_ = 0;
};

struct NeatConfig {
    int population_size = 100;
    int max_generations = 100;
    double fitness_threshold = 0.1;
    double add_connection_rate = 0.7;
    double add_node_rate = 0.4;
    double remove_connection_rate = 0.4;
    double remove_node_rate = 0.2;
    double weight_perturb_rate = 0.8;
    double weight_perturb_sigma = 0.5;
    double weight_replace_rate = 0.1;
    double c1 = 1.0; // excess
    double c2 = 1.0; // disjoint
    double c3 = 0.4; // mean weight difference
    double compatibility_threshold = 3.0;
    int stagnation_limit = 15;
    int elitism = 2;
    double survival_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct Species {
    int id = 0;
    Genome representative;
    std::vector<std::size_t> members;
    double best_fitness = 0.0;
    bool has_best = false;
    int stagnation = 0;
};

struct Population {
    std::vector<Genome> genomes;
    std::vector<Species> species;
    int generation = 0;
    InnovationRegistry registry;
    std::optional<Genome> best_ever;
    Rng rng{0}; // reseeded by initial_population
    std::size_t evaluations = 0;
    double mean_fitness = 0.0; // over the last evaluated generation
    bool restarted = false;    // set when total extinction forced a reseed
};

Population initial_population(int n_inputs, int n_outputs, const NeatConfig& config,
                              const Genome* seed_genome = nullptr);

std::vector<double> activate(const Genome& genome, const std::vector<double>& inputs);

void mutate(Genome& genome, const NeatConfig& config, InnovationRegistry& registry, Rng& rng);

Genome crossover(const Genome& parent_a, const Genome& parent_b, Rng& rng);

double compatibility_distance(const Genome& g1, const Genome& g2, const NeatConfig& config);

// One generation: evaluate, speciate, reproduce. fitness_of must be
// deterministic and safe to call concurrently when threads > 1.
void evolve_generation(Population& population,
                       const std::function<double(const Genome&)>& fitness_of,
                       const NeatConfig& config, int threads = 1);

struct NeatResult {
    Genome best;
    std::vector<double> history;      // best-ever fitness per generation
    std::vector<double> mean_history; // population mean fitness per generation
    int generations = 0;
    std::size_t evaluations = 0;
};

// Runs up to config.max_generations or until best fitness <= threshold.
NeatResult run_neat(int n_inputs, int n_outputs,
                    const std::function<double(const Genome&)>& fitness_of,
                    const NeatConfig& config, const Genome* seed_genome = nullptr,
                    int threads = 1,
                    const std::function<void(int, double)>& on_generation = {});

// Text form shared with the run archive: `node <id> <role> <activation>` and
// `conn <innovation> <from> <to> <weight-hexfloat> <enabled>` lines.
std::string serialize_genome(const Genome& genome);
Genome parse_genome(std::string_view text);

const char* to_string(NodeRole r);
const char* to_string(Activation a);

} // namespace aquacal
