#include "aquacal/neat.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "aquacal/parallel.hpp"

namespace aquacal {

namespace {

double apply_activation(Activation a, double x) {
    if (a == Activation::sigmoid) return 1.0 / (1.0 + std::exp(-4.9 * x));
    return std::min(1.0, std::max(-1.0, x));
}

// Is `target` reachable from `start` over enabled connections?
bool reachable(const Genome& g, int start, int target) {
    if (start == target) return true;
    std::unordered_multimap<int, int> out;
    for (const auto& c : g.connections)
        if (c.enabled) out.insert({c.from, c.to});
    std::vector<int> stack{start};
    std::unordered_set<int> seen{start};
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        auto [lo, hi] = out.equal_range(u);
        for (auto it = lo; it != hi; ++it) {
            if (it->second == target) return true;
            if (seen.insert(it->second).second) stack.push_back(it->second);
        }
    }
    return false;
}

void insert_connection(Genome& g, ConnectionGene c) {
    auto pos = std::lower_bound(g.connections.begin(), g.connections.end(), c.innovation,
                                [](const ConnectionGene& x, int innov) {
                                    return x.innovation < innov;
                                });
    g.connections.insert(pos, c);
}

void insert_node(Genome& g, NodeGene n) {
    auto pos = std::lower_bound(g.nodes.begin(), g.nodes.end(), n.id,
                                [](const NodeGene& x, int id) { return x.id < id; });
    g.nodes.insert(pos, n);
}

std::string format_hexfloat(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

} // namespace

const NodeGene* Genome::find_node(int id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                               [](const NodeGene& n, int want) { return n.id < want; });
    return (it != nodes.end() && it->id == id) ? &*it : nullptr;
}

const ConnectionGene* Genome::find_connection(int from, int to) const {
    for (const auto& c : connections)
        if (c.from == from && c.to == to) return &c;
    return nullptr;
}

int Genome::hidden_count() const {
    int n = 0;
    for (const auto& node : nodes)
        if (node.role == NodeRole::hidden) ++n;
    return n;
}

int InnovationRegistry::connection_innovation(int from, int to) {
    auto [it, inserted] = connection_events_.try_emplace({from, to}, next_innovation_);
    if (inserted) ++next_innovation_;
    return it->second;
}

InnovationRegistry::SplitIds InnovationRegistry::split(int connection_innovation, int from,
                                                       int to) {
    if (auto it = split_events_.find(connection_innovation); it != split_events_.end())
        return it->second;
    SplitIds ids{next_node_id_++, next_innovation_, next_innovation_ + 1};
    next_innovation_ += 2;
    split_events_[connection_innovation] = ids;
    // The two fresh connections are structural events too; future
    // connection_innovation() queries for them must agree.
    connection_events_[{from, ids.node_id}] = ids.in_innovation;
    connection_events_[{ids.node_id, to}] = ids.out_innovation;
    return ids;
}

void InnovationRegistry::begin_generation() {
    connection_events_.clear();
    split_events_.clear();
}

void InnovationRegistry::bump_counters(int min_next_node, int min_next_innovation) {
    next_node_id_ = std::max(next_node_id_, min_next_node);
    next_innovation_ = std::max(next_innovation_, min_next_innovation);
}

Population initial_population(int n_inputs, int n_outputs, const NeatConfig& config,
                              const Genome* seed_genome) {
    if (n_inputs < 1 || n_outputs < 1)
        throw SchemaError("population needs at least one input and one output");
    if (config.population_size < 2) throw SchemaError("population_size must be >= 2");

    Population pop;
    pop.rng = Rng(config.seed);
    pop.registry.bump_counters(n_inputs + n_outputs, 0);

    if (seed_genome) {
        if (seed_genome->n_inputs != n_inputs || seed_genome->n_outputs != n_outputs)
            throw SchemaError("seed genome schema mismatch: expected " +
                              std::to_string(n_inputs) + "/" + std::to_string(n_outputs) +
                              " inputs/outputs, got " +
                              std::to_string(seed_genome->n_inputs) + "/" +
                              std::to_string(seed_genome->n_outputs));
        int max_node = n_inputs + n_outputs - 1;
        for (const auto& n : seed_genome->nodes) max_node = std::max(max_node, n.id);
        int max_innov = -1;
        for (const auto& c : seed_genome->connections)
            max_innov = std::max(max_innov, c.innovation);
        pop.registry.bump_counters(max_node + 1, max_innov + 1);

        // the seed itself enters unperturbed so generation 0 can reproduce
        // its archived fitness; the rest explore around it
        for (int k = 0; k < config.population_size; ++k) {
            Genome g = *seed_genome;
            g.fitness.reset();
            if (k > 0)
                for (auto& c : g.connections)
                    c.weight += pop.rng.gaussian(0.0, config.weight_perturb_sigma);
            pop.genomes.push_back(std::move(g));
        }
        return pop;
    }

    for (int k = 0; k < config.population_size; ++k) {
        Genome g;
        g.n_inputs = n_inputs;
        g.n_outputs = n_outputs;
        for (int i = 0; i < n_inputs; ++i)
            g.nodes.push_back({i, NodeRole::input, Activation::clamped});
        for (int o = 0; o < n_outputs; ++o)
            g.nodes.push_back({n_inputs + o, NodeRole::output, Activation::clamped});
        for (int i = 0; i < n_inputs; ++i)
            for (int o = 0; o < n_outputs; ++o) {
                int innov = pop.registry.connection_innovation(i, n_inputs + o);
                g.connections.push_back(
                    {innov, i, n_inputs + o, pop.rng.uniform(-1.0, 1.0), true});
            }
        pop.genomes.push_back(std::move(g));
    }
    return pop;
}

std::vector<double> activate(const Genome& genome, const std::vector<double>& inputs) {
    if (int(inputs.size()) != genome.n_inputs)
        throw SchemaError("activate: expected " + std::to_string(genome.n_inputs) +
                          " inputs, got " + std::to_string(inputs.size()));

    const std::size_t n = genome.nodes.size();
    std::unordered_map<int, std::size_t> index;
    index.reserve(n);
    for (std::size_t i = 0; i < n; ++i) index[genome.nodes[i].id] = i;

    // Incoming lists in connection order keep every weighted sum's addend
    // order fixed, so results do not depend on the traversal sequence.
    std::vector<std::vector<const ConnectionGene*>> incoming(n);
    std::vector<int> indegree(n, 0);
    std::vector<std::vector<std::size_t>> outgoing(n);
    for (const auto& c : genome.connections) {
        if (!c.enabled) continue;
        std::size_t f = index.at(c.from), t = index.at(c.to);
        incoming[t].push_back(&c);
        outgoing[f].push_back(t);
        ++indegree[t];
    }

    std::vector<double> value(n, 0.0);
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indegree[i] == 0) ready.push_back(i);

    std::size_t processed = 0;
    for (std::size_t head = 0; head < ready.size(); ++head) {
        std::size_t i = ready[head];
        const NodeGene& node = genome.nodes[i];
        if (node.role == NodeRole::input) {
            value[i] = inputs[std::size_t(node.id)];
        } else {
            double sum = 0.0;
            for (const ConnectionGene* c : incoming[i])
                sum += c->weight * value[index.at(c->from)];
            value[i] = apply_activation(node.activation, sum);
        }
        ++processed;
        for (std::size_t t : outgoing[i])
            if (--indegree[t] == 0) ready.push_back(t);
    }
    if (processed != n) throw SchemaError("activate: genome graph is not acyclic");

    std::vector<double> out;
    out.reserve(std::size_t(genome.n_outputs));
    for (std::size_t i = 0; i < n; ++i)
        if (genome.nodes[i].role == NodeRole::output) out.push_back(value[i]);
    return out;
}

void mutate(Genome& genome, const NeatConfig& config, InnovationRegistry& registry,
            Rng& rng) {
    // add node: split a random enabled connection
    if (rng.chance(config.add_node_rate)) {
        std::vector<std::size_t> enabled;
        for (std::size_t i = 0; i < genome.connections.size(); ++i)
            if (genome.connections[i].enabled) enabled.push_back(i);
        if (!enabled.empty()) {
            std::size_t pick = enabled[rng.next_below(enabled.size())];
            ConnectionGene& target = genome.connections[pick];
            auto ids = registry.split(target.innovation, target.from, target.to);
            if (!genome.find_node(ids.node_id)) {
                target.enabled = false;
                int from = target.from, to = target.to;
                double w = target.weight;
                insert_node(genome, {ids.node_id, NodeRole::hidden, Activation::sigmoid});
                insert_connection(genome, {ids.in_innovation, from, ids.node_id, 1.0, true});
                insert_connection(genome, {ids.out_innovation, ids.node_id, to, w, true});
            }
        }
    }

    // add connection: a random feasible non-cycle-creating pair
    if (rng.chance(config.add_connection_rate)) {
        std::vector<std::pair<int, int>> candidates;
        for (const auto& from : genome.nodes) {
            if (from.role == NodeRole::output) continue;
            for (const auto& to : genome.nodes) {
                if (to.role == NodeRole::input || to.id == from.id) continue;
                if (genome.find_connection(from.id, to.id)) continue;
                if (reachable(genome, to.id, from.id)) continue;
                candidates.push_back({from.id, to.id});
            }
        }
        if (!candidates.empty()) {
            auto [from, to] = candidates[rng.next_below(candidates.size())];
            int innov = registry.connection_innovation(from, to);
            insert_connection(genome, {innov, from, to, rng.uniform(-1.0, 1.0), true});
        }
    }

    // remove connection
    if (rng.chance(config.remove_connection_rate) && !genome.connections.empty()) {
        std::size_t pick = rng.next_below(genome.connections.size());
        genome.connections.erase(genome.connections.begin() + std::ptrdiff_t(pick));
    }

    // remove node: a random hidden node with its incident connections
    if (rng.chance(config.remove_node_rate)) {
        std::vector<int> hidden;
        for (const auto& n : genome.nodes)
            if (n.role == NodeRole::hidden) hidden.push_back(n.id);
        if (!hidden.empty()) {
            int id = hidden[rng.next_below(hidden.size())];
            std::erase_if(genome.connections,
                          [id](const ConnectionGene& c) { return c.from == id || c.to == id; });
            std::erase_if(genome.nodes, [id](const NodeGene& n) { return n.id == id; });
        }
    }

    // weight mutation per connection
    for (auto& c : genome.connections) {
        if (rng.chance(config.weight_replace_rate))
            c.weight = rng.uniform(-1.0, 1.0);
        else if (rng.chance(config.weight_perturb_rate))
            c.weight += rng.gaussian(0.0, config.weight_perturb_sigma);
    }
}

namespace {

// Disables any enabled gene that closes a cycle given the genes accepted so
// far; innovation order makes the repair deterministic.
void repair_acyclic(Genome& g) {
    std::unordered_multimap<int, int> out;
    auto creates_cycle = [&](int from, int to) {
        if (from == to) return true;
        std::vector<int> stack{to};
        std::unordered_set<int> seen{to};
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            if (u == from) return true;
            auto [lo, hi] = out.equal_range(u);
            for (auto it = lo; it != hi; ++it)
                if (seen.insert(it->second).second) stack.push_back(it->second);
        }
        return false;
    };
    for (auto& c : g.connections) {
        if (!c.enabled) continue;
        if (creates_cycle(c.from, c.to))
            c.enabled = false;
        else
            out.insert({c.from, c.to});
    }
}

} // namespace

Genome crossover(const Genome& parent_a, const Genome& parent_b, Rng& rng) {
    if (!parent_a.fitness || !parent_b.fitness)
        throw SchemaError("crossover requires fitness on both parents");

    const bool b_fitter = *parent_b.fitness < *parent_a.fitness;
    const Genome& fitter = b_fitter ? parent_b : parent_a;
    const Genome& other = b_fitter ? parent_a : parent_b;

    Genome child;
    child.n_inputs = fitter.n_inputs;
    child.n_outputs = fitter.n_outputs;
    child.nodes = fitter.nodes;

    std::size_t i = 0, j = 0;
    while (i < fitter.connections.size()) {
        const ConnectionGene& f = fitter.connections[i];
        while (j < other.connections.size() && other.connections[j].innovation < f.innovation)
            ++j; // other-only genes are dropped
        if (j < other.connections.size() && other.connections[j].innovation == f.innovation) {
            const ConnectionGene& o = other.connections[j];
            ConnectionGene c = f;
            c.weight = rng.chance(0.5) ? f.weight : o.weight;
            if (!f.enabled || !o.enabled)
                c.enabled = !rng.chance(0.75);
            child.connections.push_back(c);
            ++j;
        } else {
            child.connections.push_back(f);
        }
        ++i;
    }
    repair_acyclic(child);
    return child;
}

double compatibility_distance(const Genome& g1, const Genome& g2, const NeatConfig& config) {
    const auto& a = g1.connections;
    const auto& b = g2.connections;
    if (a.empty() && b.empty()) return 0.0;

    int max_a = a.empty() ? -1 : a.back().innovation;
    int max_b = b.empty() ? -1 : b.back().innovation;
    int shared_max = std::min(max_a, max_b);

    int matching = 0, disjoint = 0, excess = 0;
    double weight_diff = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (i < a.size() && j < b.size() && a[i].innovation == b[j].innovation) {
            ++matching;
            weight_diff += std::abs(a[i].weight - b[j].weight);
            ++i;
            ++j;
        } else if (j >= b.size() || (i < a.size() && a[i].innovation < b[j].innovation)) {
            (a[i].innovation > shared_max ? excess : disjoint)++;
            ++i;
        } else {
            (b[j].innovation > shared_max ? excess : disjoint)++;
            ++j;
        }
    }

    double n = double(std::max(a.size(), b.size()));
    if (a.size() < 20 && b.size() < 20) n = 1.0;
    double mean_w = matching > 0 ? weight_diff / matching : 0.0;
    return config.c1 * excess / n + config.c2 * disjoint / n + config.c3 * mean_w;
}

namespace {

int next_species_id(const std::vector<Species>& species) {
    int id = 0;
    for (const auto& s : species) id = std::max(id, s.id + 1);
    return id;
}

} // namespace

// Evaluate genomes that do not carry fitness (elites keep theirs).
static void score_population(Population& pop,
                             const std::function<double(const Genome&)>& fitness_of,
                             int threads) {
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < pop.genomes.size(); ++i)
        if (!pop.genomes[i].fitness) pending.push_back(i);
    std::vector<double> results(pending.size());
    parallel_for(pending.size(), threads,
                 [&](std::size_t k) { results[k] = fitness_of(pop.genomes[pending[k]]); });
    for (std::size_t k = 0; k < pending.size(); ++k)
        pop.genomes[pending[k]].fitness = results[k];
    pop.evaluations += pending.size();

    double sum = 0.0;
    for (const auto& g : pop.genomes) {
        if (!pop.best_ever || *g.fitness < *pop.best_ever->fitness) pop.best_ever = g;
        sum += *g.fitness;
    }
    pop.mean_fitness = sum / double(pop.genomes.size());
}

void evolve_generation(Population& pop,
                       const std::function<double(const Genome&)>& fitness_of,
                       const NeatConfig& config, int threads) {
    pop.registry.begin_generation();
    score_population(pop, fitness_of, threads);

    // Speciate against carried-over representatives, first fit wins.
    for (auto& s : pop.species) s.members.clear();
    for (std::size_t i = 0; i < pop.genomes.size(); ++i) {
        bool placed = false;
        for (auto& s : pop.species) {
            if (compatibility_distance(pop.genomes[i], s.representative, config) <
                config.compatibility_threshold) {
                s.members.push_back(i);
                placed = true;
                break;
            }
        }
        if (!placed) {
            Species s;
            s.id = next_species_id(pop.species);
            s.representative = pop.genomes[i];
            s.members.push_back(i);
            pop.species.push_back(std::move(s));
        }
    }
    std::erase_if(pop.species, [](const Species& s) { return s.members.empty(); });
    for (auto& s : pop.species) s.representative = pop.genomes[s.members.front()];

    // Stagnation bookkeeping; the species holding the current best is immune.
    double global_best = std::numeric_limits<double>::infinity();
    for (const auto& g : pop.genomes) global_best = std::min(global_best, *g.fitness);
    int best_species_id = -1;
    for (auto& s : pop.species) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t m : s.members) best = std::min(best, *pop.genomes[m].fitness);
        if (!s.has_best || best < s.best_fitness) {
            s.best_fitness = best;
            s.has_best = true;
            s.stagnation = 0;
        } else {
            ++s.stagnation;
        }
        if (best == global_best && best_species_id < 0) best_species_id = s.id;
    }
    std::erase_if(pop.species, [&](const Species& s) {
        return s.stagnation > config.stagnation_limit && s.id != best_species_id;
    });

    if (pop.species.empty()) {
        // Total extinction: reseed while keeping counters and best_ever.
        pop.restarted = true;
        for (auto& g : pop.genomes) {
            Genome fresh;
            fresh.n_inputs = g.n_inputs;
            fresh.n_outputs = g.n_outputs;
            for (int i = 0; i < fresh.n_inputs; ++i)
                fresh.nodes.push_back({i, NodeRole::input, Activation::clamped});
            for (int o = 0; o < fresh.n_outputs; ++o)
                fresh.nodes.push_back(
                    {fresh.n_inputs + o, NodeRole::output, Activation::clamped});
            for (int i = 0; i < fresh.n_inputs; ++i)
                for (int o = 0; o < fresh.n_outputs; ++o) {
                    int innov = pop.registry.connection_innovation(i, fresh.n_inputs + o);
                    fresh.connections.push_back(
                        {innov, i, fresh.n_inputs + o, pop.rng.uniform(-1.0, 1.0), true});
                }
            g = std::move(fresh);
        }
        ++pop.generation;
        return;
    }

    // Offspring quotas from mean adjusted fitness, largest remainder.
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& s : pop.species)
        for (std::size_t m : s.members) worst = std::max(worst, *pop.genomes[m].fitness);
    std::vector<double> score(pop.species.size(), 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < pop.species.size(); ++k) {
        double sum = 0.0;
        for (std::size_t m : pop.species[k].members) sum += worst - *pop.genomes[m].fitness;
        score[k] = sum / double(pop.species[k].members.size());
        total += score[k];
    }
    const int target = config.population_size;
    std::vector<int> quota(pop.species.size(), 0);
    if (total <= 0.0) {
        for (int i = 0; i < target; ++i) quota[std::size_t(i) % quota.size()]++;
    } else {
        std::vector<std::pair<double, std::size_t>> remainders;
        int assigned = 0;
        for (std::size_t k = 0; k < quota.size(); ++k) {
            double share = score[k] / total * target;
            quota[k] = int(std::floor(share));
            assigned += quota[k];
            remainders.push_back({share - std::floor(share), k});
        }
        std::sort(remainders.begin(), remainders.end(), [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first > y.first : x.second < y.second;
        });
        for (int i = 0; assigned < target; ++i, ++assigned) {
            quota[remainders[std::size_t(i) % remainders.size()].second]++;
        }
    }
    // The best species always gets to reproduce.
    for (std::size_t k = 0; k < pop.species.size(); ++k) {
        if (pop.species[k].id == best_species_id && quota[k] == 0) {
            std::size_t donor = 0;
            for (std::size_t m = 1; m < quota.size(); ++m)
                if (quota[m] > quota[donor]) donor = m;
            if (quota[donor] > 0) {
                --quota[donor];
                ++quota[k];
            }
        }
    }

    std::vector<Genome> next;
    next.reserve(std::size_t(target));
    for (std::size_t k = 0; k < pop.species.size(); ++k) {
        Species& s = pop.species[k];
        std::vector<std::size_t> order = s.members;
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            double fx = *pop.genomes[x].fitness, fy = *pop.genomes[y].fitness;
            return fx != fy ? fx < fy : x < y;
        });
        int want = quota[k];
        int elites = std::min({config.elitism, want, int(order.size())});
        for (int e = 0; e < elites; ++e) next.push_back(pop.genomes[order[std::size_t(e)]]);

        std::size_t survivors = std::max<std::size_t>(
            1, std::size_t(std::ceil(config.survival_fraction * double(order.size()))));
        survivors = std::min(survivors, order.size());
        for (int c = elites; c < want; ++c) {
            const Genome& pa = pop.genomes[order[pop.rng.next_below(survivors)]];
            const Genome& pb = pop.genomes[order[pop.rng.next_below(survivors)]];
            Genome child = crossover(pa, pb, pop.rng);
            mutate(child, config, pop.registry, pop.rng);
            child.fitness.reset();
            next.push_back(std::move(child));
        }
    }
    pop.genomes = std::move(next);
    ++pop.generation;
}

NeatResult run_neat(int n_inputs, int n_outputs,
                    const std::function<double(const Genome&)>& fitness_of,
                    const NeatConfig& config, const Genome* seed_genome, int threads,
                    const std::function<void(int, double)>& on_generation) {
    Population pop = initial_population(n_inputs, n_outputs, config, seed_genome);
    NeatResult out;
    if (config.max_generations <= 0) {
        // No evolution budget: score the initial population once so the
        // caller still gets a generation-0 (prior-sampling) best.
        score_population(pop, fitness_of, threads);
        out.history.push_back(*pop.best_ever->fitness);
        out.mean_history.push_back(pop.mean_fitness);
        out.generations = 1;
        if (on_generation) on_generation(0, *pop.best_ever->fitness);
        out.best = *pop.best_ever;
        out.evaluations = pop.evaluations;
        return out;
    }
    for (int gen = 0; gen < config.max_generations; ++gen) {
        evolve_generation(pop, fitness_of, config, threads);
        double best = *pop.best_ever->fitness;
        out.history.push_back(best);
        out.mean_history.push_back(pop.mean_fitness);
        out.generations = gen + 1;
        if (on_generation) on_generation(gen, best);
        if (best <= config.fitness_threshold) break;
    }
    out.best = *pop.best_ever;
    out.evaluations = pop.evaluations;
    return out;
}

const char* to_string(NodeRole r) {
    switch (r) {
        case NodeRole::input: return "input";
        case NodeRole::hidden: return "hidden";
        case NodeRole::output: return "output";
    }
    return "?";
}

const char* to_string(Activation a) {
    return a == Activation::sigmoid ? "sigmoid" : "clamped";
}

std::string serialize_genome(const Genome& genome) {
    std::ostringstream os;
    for (const auto& n : genome.nodes)
        os << "node " << n.id << ' ' << to_string(n.role) << ' ' << to_string(n.activation)
           << '\n';
    for (const auto& c : genome.connections)
        os << "conn " << c.innovation << ' ' << c.from << ' ' << c.to << ' '
           << format_hexfloat(c.weight) << ' ' << (c.enabled ? 1 : 0) << '\n';
    return os.str();
}

Genome parse_genome(std::string_view text) {
    Genome g;
    std::set<int> node_ids, innovations;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view raw = (eol == std::string_view::npos) ? text.substr(pos)
                                                               : text.substr(pos, eol - pos);
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
        ++lineno;
        auto toks = split_ws(trim(raw));
        if (toks.empty()) continue;
        if (toks[0] == "node") {
            if (toks.size() != 4) throw SchemaError("bad node line " + std::to_string(lineno));
            NodeGene n;
            auto id = parse_long(toks[1]);
            if (!id) throw SchemaError("bad node id at line " + std::to_string(lineno));
            n.id = int(*id);
            if (!node_ids.insert(n.id).second)
                throw SchemaError("duplicate node id " + toks[1]);
            if (toks[2] == "input") n.role = NodeRole::input;
            else if (toks[2] == "hidden") n.role = NodeRole::hidden;
            else if (toks[2] == "output") n.role = NodeRole::output;
            else throw SchemaError("unknown node role '" + toks[2] + "'");
            if (toks[3] == "sigmoid") n.activation = Activation::sigmoid;
            else if (toks[3] == "clamped") n.activation = Activation::clamped;
            else throw SchemaError("unknown activation '" + toks[3] + "'");
            g.nodes.push_back(n);
        } else if (toks[0] == "conn") {
            if (toks.size() != 6) throw SchemaError("bad conn line " + std::to_string(lineno));
            ConnectionGene c;
            auto innov = parse_long(toks[1]);
            auto from = parse_long(toks[2]);
            auto to = parse_long(toks[3]);
            if (!innov || !from || !to)
                throw SchemaError("bad conn fields at line " + std::to_string(lineno));
            c.innovation = int(*innov);
            if (!innovations.insert(c.innovation).second)
                throw SchemaError("duplicate innovation " + toks[1]);
            c.from = int(*from);
            c.to = int(*to);
            char* end = nullptr;
            c.weight = std::strtod(toks[4].c_str(), &end);
            if (end == toks[4].c_str() || *end != '\0')
                throw SchemaError("bad weight '" + toks[4] + "'");
            if (toks[5] == "1") c.enabled = true;
            else if (toks[5] == "0") c.enabled = false;
            else throw SchemaError("bad enabled flag '" + toks[5] + "'");
            g.connections.push_back(c);
        } else {
            throw SchemaError("unknown genome line '" + toks[0] + "'");
        }
    }

    std::sort(g.nodes.begin(), g.nodes.end(),
              [](const NodeGene& a, const NodeGene& b) { return a.id < b.id; });
    std::sort(g.connections.begin(), g.connections.end(),
              [](const ConnectionGene& a, const ConnectionGene& b) {
                  return a.innovation < b.innovation;
              });
    for (const auto& n : g.nodes) {
        if (n.role == NodeRole::input) ++g.n_inputs;
        if (n.role == NodeRole::output) ++g.n_outputs;
    }
    for (int i = 0; i < g.n_inputs; ++i) {
        if (!g.find_node(i) || g.find_node(i)->role != NodeRole::input)
            throw SchemaError("inputs must occupy node ids 0.." +
                              std::to_string(g.n_inputs - 1));
    }
    for (int o = 0; o < g.n_outputs; ++o) {
        int id = g.n_inputs + o;
        if (!g.find_node(id) || g.find_node(id)->role != NodeRole::output)
            throw SchemaError("outputs must follow inputs contiguously");
    }
    for (const auto& c : g.connections) {
        const NodeGene* from = g.find_node(c.from);
        const NodeGene* to = g.find_node(c.to);
        if (!from || !to)
            throw SchemaError("connection " + std::to_string(c.innovation) +
                              " references a missing node");
        if (to->role == NodeRole::input || from->role == NodeRole::output)
            throw SchemaError("connection " + std::to_string(c.innovation) +
                              " violates role constraints");
    }
    return g;
}

} // namespace aquacal
