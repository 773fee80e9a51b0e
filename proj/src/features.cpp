#include "aquacal/features.hpp"

#include <algorithm>
#include <set>

#include "aquacal/common.hpp"

namespace aquacal {

namespace {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    bool any = false;

    void add(double v) {
        if (!any) {
            lo = hi = v;
            any = true;
        } else {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    double norm(double v) const {
        if (!any || hi <= lo) return 0.5;
        return (v - lo) / (hi - lo);
    }
};

} // namespace

const std::vector<FeatureDef>& FeatureSchema::for_kind(ElementKind kind) const {
    switch (kind) {
    case ElementKind::pipe: return pipe;
    case ElementKind::junction: return junction;
    case ElementKind::valve: return valve;
    }
    throw SchemaError("unknown element kind");
}

std::string FeatureSchema::serialize() const {
    std::string out;
    auto emit = [&out](const char* kind, const std::vector<FeatureDef>& defs) {
        for (const auto& d : defs) {
            out += kind;
            out += ' ';
            out += d.name;
            out += ' ';
            out += format_double(d.lo);
            out += ' ';
            out += format_double(d.hi);
            out += '\n';
        }
    };
    emit("pipe", pipe);
    emit("junction", junction);
    emit("valve", valve);
    return out;
}

const std::vector<double>& FeatureSet::vector_for(ElementKind kind,
                                                  const std::string& id) const {
    const std::map<std::string, std::vector<double>>* m = nullptr;
    switch (kind) {
    case ElementKind::pipe: m = &pipe_vectors; break;
    case ElementKind::junction: m = &junction_vectors; break;
    case ElementKind::valve: m = &valve_vectors; break;
    }
    auto it = m->find(id);
    if (it == m->end())
        throw ModelError(std::string("no feature vector for ") + to_string(kind) + " " + id);
    return it->second;
}

FeatureSet build_features(const NetworkModel& model) {
    FeatureSet fs;

    // Node statistics shared by several features: incident-link degree over
    // every node, and per-node elevation (reservoirs contribute their head).
    std::map<std::string, int> degree;
    std::map<std::string, double> node_elev;
    for (const auto& j : model.junctions) {
        degree[j.id] = 0;
        node_elev[j.id] = j.elevation_m;
    }
    for (const auto& r : model.reservoirs) {
        degree[r.id] = 0;
        node_elev[r.id] = r.head_m;
    }
    auto touch = [&degree](const std::string& a, const std::string& b) {
        ++degree[a];
        ++degree[b];
    };
    for (const auto& p : model.pipes) touch(p.from, p.to);
    for (const auto& v : model.valves) touch(v.from, v.to);

    Range deg_range;
    for (const auto& [id, d] : degree) deg_range.add(double(d));

    auto mid_elev = [&node_elev](const std::string& a, const std::string& b) {
        return (node_elev.at(a) + node_elev.at(b)) / 2.0;
    };

    // Pipes.
    Range p_len, p_dia, p_mid;
    std::set<std::string> materials;
    for (const auto& p : model.pipes) {
        p_len.add(p.length_m);
        p_dia.add(p.diameter_mm);
        p_mid.add(mid_elev(p.from, p.to));
        if (!p.material.empty()) materials.insert(p.material);
    }
    auto def = [](const std::string& name, const Range& r) {
        return FeatureDef{name, r.any ? r.lo : 0.0, r.any ? r.hi : 1.0};
    };
    if (!model.pipes.empty()) {
        fs.schema.pipe.push_back({"const_1", 0.0, 1.0});
        fs.schema.pipe.push_back(def("length_norm", p_len));
        fs.schema.pipe.push_back(def("diameter_norm", p_dia));
        fs.schema.pipe.push_back(def("degree_from_norm", deg_range));
        fs.schema.pipe.push_back(def("degree_to_norm", deg_range));
        fs.schema.pipe.push_back(def("mid_elevation_norm", p_mid));
        for (const auto& m : materials) fs.schema.pipe.push_back({"material=" + m, 0.0, 1.0});
        for (const auto& p : model.pipes) {
            std::vector<double> v;
            v.reserve(fs.schema.pipe.size());
            v.push_back(1.0);
            v.push_back(p_len.norm(p.length_m));
            v.push_back(p_dia.norm(p.diameter_mm));
            v.push_back(deg_range.norm(double(degree.at(p.from))));
            v.push_back(deg_range.norm(double(degree.at(p.to))));
            v.push_back(p_mid.norm(mid_elev(p.from, p.to)));
            for (const auto& m : materials) v.push_back(p.material == m ? 1.0 : 0.0);
            fs.pipe_vectors.emplace(p.id, std::move(v));
        }
    }

    // Junctions.
    Range j_elev, j_dem;
    std::set<std::string> zones;
    for (const auto& j : model.junctions) {
        j_elev.add(j.elevation_m);
        j_dem.add(j.base_demand_lps);
        if (!j.zone.empty()) zones.insert(j.zone);
    }
    if (!model.junctions.empty()) {
        fs.schema.junction.push_back({"const_1", 0.0, 1.0});
        fs.schema.junction.push_back(def("elevation_norm", j_elev));
        fs.schema.junction.push_back(def("degree_norm", deg_range));
        fs.schema.junction.push_back(def("base_demand_norm", j_dem));
        for (const auto& z : zones) fs.schema.junction.push_back({"zone=" + z, 0.0, 1.0});
        for (const auto& j : model.junctions) {
            std::vector<double> v;
            v.reserve(fs.schema.junction.size());
            v.push_back(1.0);
            v.push_back(j_elev.norm(j.elevation_m));
            v.push_back(deg_range.norm(double(degree.at(j.id))));
            v.push_back(j_dem.norm(j.base_demand_lps));
            for (const auto& z : zones) v.push_back(j.zone == z ? 1.0 : 0.0);
            fs.junction_vectors.emplace(j.id, std::move(v));
        }
    }

    // Valves.
    Range v_dia, v_mid;
    std::set<std::string> vkinds;
    for (const auto& v : model.valves) {
        v_dia.add(v.diameter_mm);
        v_mid.add(mid_elev(v.from, v.to));
        vkinds.insert(v.kind);
    }
    if (!model.valves.empty()) {
        fs.schema.valve.push_back({"const_1", 0.0, 1.0});
        fs.schema.valve.push_back(def("diameter_norm", v_dia));
        fs.schema.valve.push_back(def("degree_from_norm", deg_range));
        fs.schema.valve.push_back(def("degree_to_norm", deg_range));
        fs.schema.valve.push_back(def("mid_elevation_norm", v_mid));
        for (const auto& k : vkinds) fs.schema.valve.push_back({"kind=" + k, 0.0, 1.0});
        for (const auto& v : model.valves) {
            std::vector<double> vec;
            vec.reserve(fs.schema.valve.size());
            vec.push_back(1.0);
            vec.push_back(v_dia.norm(v.diameter_mm));
            vec.push_back(deg_range.norm(double(degree.at(v.from))));
            vec.push_back(deg_range.norm(double(degree.at(v.to))));
            vec.push_back(v_mid.norm(mid_elev(v.from, v.to)));
            for (const auto& k : vkinds) vec.push_back(v.kind == k ? 1.0 : 0.0);
            fs.valve_vectors.emplace(v.id, std::move(vec));
        }
    }

    return fs;
}

FeatureSchema parse_feature_schema(std::string_view text) {
    FeatureSchema schema;
    std::size_t pos = 0;
    int lineno = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view raw = (eol == std::string_view::npos) ? text.substr(pos)
                                                               : text.substr(pos, eol - pos);
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
        ++lineno;
        auto toks = split_ws(trim(raw));
        if (toks.empty()) continue;
        if (toks.size() != 4)
            throw SchemaError("bad schema line " + std::to_string(lineno) +
                              ": expected 'kind name lo hi'");
        auto lo = parse_double(toks[2]);
        auto hi = parse_double(toks[3]);
        if (!lo || !hi)
            throw SchemaError("bad schema bounds at line " + std::to_string(lineno));
        FeatureDef def{toks[1], *lo, *hi};
        if (toks[0] == "pipe") schema.pipe.push_back(def);
        else if (toks[0] == "junction") schema.junction.push_back(def);
        else if (toks[0] == "valve") schema.valve.push_back(def);
        else throw SchemaError("unknown schema element kind '" + toks[0] + "'");
    }
    return schema;
}

} // namespace aquacal
