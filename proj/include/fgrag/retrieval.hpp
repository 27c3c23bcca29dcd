#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgrag/graph.hpp"
#include "fgrag/llm.hpp"
#include "fgrag/vector_store.hpp"

namespace fgrag {

struct RetrievalConfig {
    std::size_t top_n_weak = 5;
    std::size_t top_n_strong_per_seed = 3;
    std::size_t bfs_depth = 1;
    std::size_t max_descriptions = 200;
    bool match_relationships = false;  // reserved; rejected when enabled

    void validate() const {
        if (top_n_weak < 1 || top_n_strong_per_seed < 1)
            throw ConfigError("expansion top-n values must be >= 1");
        if (max_descriptions < 1) throw ConfigError("max_descriptions must be >= 1");
        if (match_relationships)
            throw ConfigError("relationship matching is not supported in this version");
    }
};

// How a node or description entered the subgraph. Weak-context entities are
// the direct matches of the query entity; strong-context entities are the
// matches of the weak set; everything else arrived by BFS.
enum class Origin { weak, strong, bfs };

inline const char* to_string(Origin o) {
    switch (o) {
        case Origin::weak: return "weak";
        case Origin::strong: return "strong";
        case Origin::bfs: return "bfs";
    }
    return "?";
}

struct SubgraphNode {
    std::string name;
    Origin origin;
};

struct SubgraphDescription {
    std::string text;
    Origin origin;
    std::string source;  // entity name, or "src -> dst" for an edge
    bool from_edge = false;
};

struct Subgraph {
    std::vector<SubgraphNode> nodes;
    std::vector<std::size_t> edges;  // relationship ids in the parent graph
    std::vector<SubgraphDescription> descriptions;

    bool empty() const { return nodes.empty(); }
};

struct BfsResult {
    std::vector<std::string> nodes;  // visitation order
    std::vector<std::size_t> edges;  // traversal order, each id once
};

// BFS over the undirected view of the relationships. Seeds are visited in the
// given order, neighbors in ascending name order. Every incident edge of an
// expanded node counts as traversed. Unknown seeds are skipped with a warning.
inline BfsResult bfs_collect(const std::vector<std::string>& seeds, std::size_t depth,
                             const KnowledgeGraph& graph,
                             std::vector<std::string>* warnings = nullptr) {
    BfsResult out;
    std::set<std::string> visited;
    std::set<std::size_t> edge_seen;
    std::deque<std::pair<std::string, std::size_t>> frontier;  // (name, depth)

    for (const auto& seed : seeds) {
        if (!graph.has_entity(seed)) {
            if (warnings) warnings->push_back("unknown BFS seed skipped: " + seed);
            continue;
        }
        if (visited.insert(seed).second) {
            out.nodes.push_back(seed);
            frontier.emplace_back(seed, 0);
        }
    }

    while (!frontier.empty()) {
        auto [name, d] = frontier.front();
        frontier.pop_front();
        if (d >= depth) continue;

        // Neighbor map is ordered by name, giving the visitation order.
        std::map<std::string, std::vector<std::size_t>> neighbors;
        for (std::size_t id : graph.adjacent_relationships(name)) {
            const Relationship& r = graph.relationship(id);
            const std::string& other = r.src == name ? r.dst : r.src;
            neighbors[other].push_back(id);
        }
        for (const auto& [other, ids] : neighbors) {
            for (std::size_t id : ids)
                if (edge_seen.insert(id).second) out.edges.push_back(id);
            if (visited.insert(other).second) {
                out.nodes.push_back(other);
                frontier.emplace_back(other, d + 1);
            }
        }
    }
    return out;
}

struct Expansion {
    std::vector<std::string> weak;    // score order
    std::vector<std::string> strong;  // seed-major, score-minor, first-seen dedup
};

// Context-Aware Entity Expansion plus subgraph assembly. Read-only over the
// graph and store; safe to run many retrievals concurrently.
class Retriever {
public:
    Retriever(const KnowledgeGraph& graph, const VectorStore& store, LlmGateway& gateway,
              RetrievalConfig cfg = {})
        : graph_(graph), store_(store), gateway_(gateway), cfg_(cfg) {
        cfg_.validate();
    }

    const RetrievalConfig& config() const { return cfg_; }

    // Weak set: top-n matches of the query-entity embedding. Strong set: for
    // each weak entity, the top matches of its stored vector (overlap with
    // the weak set allowed, duplicates within the strong set removed).
    Expansion expand_entities(const std::string& entity_text) const {
        if (trim_view(entity_text).empty())
            throw ConfigError("expand_entities requires a non-empty entity text");
        if (store_.empty()) return {};
        return expand_from_vector(gateway_.embed_one(entity_text));
    }

    Expansion expand_from_vector(const EmbeddingVector& query) const {
        Expansion out;
        if (store_.empty()) return out;
        for (const auto& m : store_.match_top_k(query, cfg_.top_n_weak))
            out.weak.push_back(m.entity_name);
        std::set<std::string> seen;
        for (const auto& seed : out.weak) {
            const EmbeddingVector* v = store_.vector_of(seed);
            if (!v) continue;
            for (const auto& m : store_.match_top_k(*v, cfg_.top_n_strong_per_seed))
                if (seen.insert(m.entity_name).second) out.strong.push_back(m.entity_name);
        }
        return out;
    }

    Subgraph retrieve_subgraph(const std::string& entity_text) const {
        return assemble(expand_entities(entity_text));
    }

    Subgraph retrieve_from_vector(const EmbeddingVector& query) const {
        return assemble(expand_from_vector(query));
    }

    // BFS runs separately from the weak and strong seed sets; node and edge
    // sets are merged, and descriptions are deduplicated with weak-tier
    // material kept ahead of strong- and bfs-tier when the cap truncates.
    Subgraph assemble(const Expansion& exp) const {
        Subgraph sg;
        if (exp.weak.empty() && exp.strong.empty()) return sg;

        const BfsResult weak_run = bfs_collect(exp.weak, cfg_.bfs_depth, graph_);
        const BfsResult strong_run = bfs_collect(exp.strong, cfg_.bfs_depth, graph_);

        const std::set<std::string> weak_set(exp.weak.begin(), exp.weak.end());
        const std::set<std::string> strong_set(exp.strong.begin(), exp.strong.end());

        auto origin_of = [&](const std::string& name) {
            if (weak_set.count(name)) return Origin::weak;
            if (strong_set.count(name)) return Origin::strong;
            return Origin::bfs;
        };

        // Node order: weak seeds, strong newcomers, then BFS discoveries in
        // traversal order (weak run before strong run).
        std::set<std::string> listed;
        auto add_node = [&](const std::string& name) {
            if (!graph_.has_entity(name)) return;
            if (listed.insert(name).second) sg.nodes.push_back({name, origin_of(name)});
        };
        for (const auto& n : exp.weak) add_node(n);
        for (const auto& n : exp.strong) add_node(n);
        for (const auto& n : weak_run.nodes) add_node(n);
        for (const auto& n : strong_run.nodes) add_node(n);

        std::set<std::size_t> edge_listed;
        std::map<std::size_t, Origin> edge_origin;
        for (std::size_t id : weak_run.edges)
            if (edge_listed.insert(id).second) {
                sg.edges.push_back(id);
                edge_origin[id] = Origin::weak;
            }
        for (std::size_t id : strong_run.edges)
            if (edge_listed.insert(id).second) {
                sg.edges.push_back(id);
                edge_origin[id] = Origin::strong;
            }

        sg.descriptions = assemble_descriptions(sg, edge_origin);
        return sg;
    }

    // Ordered candidate list: per tier (weak, strong, bfs), entity
    // descriptions first (node listing order), then edge descriptions (edge
    // listing order); exact-string dedup, truncated to max_descriptions.
    std::vector<SubgraphDescription> assemble_descriptions(
        const Subgraph& sg, const std::map<std::size_t, Origin>& edge_origin) const {
        std::vector<SubgraphDescription> candidates;
        for (Origin tier : {Origin::weak, Origin::strong, Origin::bfs}) {
            for (const auto& node : sg.nodes) {
                if (node.origin != tier) continue;
                const Entity* e = graph_.entity(node.name);
                if (!e) continue;
                for (const auto& d : e->descriptions)
                    candidates.push_back({d.text, tier, node.name, false});
            }
            for (std::size_t id : sg.edges) {
                auto it = edge_origin.find(id);
                const Origin eo = it == edge_origin.end() ? Origin::bfs : it->second;
                if (eo != tier) continue;
                const Relationship& r = graph_.relationship(id);
                if (r.description.empty()) continue;
                candidates.push_back({r.description, tier, r.src + " -> " + r.dst, true});
            }
        }
        std::vector<SubgraphDescription> out;
        std::set<std::string> seen;
        for (auto& c : candidates) {
            if (!seen.insert(c.text).second) continue;
            out.push_back(std::move(c));
            if (out.size() >= cfg_.max_descriptions) break;
        }
        return out;
    }

private:
    const KnowledgeGraph& graph_;
    const VectorStore& store_;
    LlmGateway& gateway_;
    RetrievalConfig cfg_;
};

// Flat ordered description texts of a subgraph; deduplication is idempotent.
inline std::vector<std::string> collect_descriptions(const Subgraph& sg) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& d : sg.descriptions)
        if (seen.insert(d.text).second) out.push_back(d.text);
    return out;
}

inline void dump_subgraph_jsonl(const Subgraph& sg, const KnowledgeGraph& graph,
                                std::ostream& os) {
    for (const auto& node : sg.nodes) {
        nlohmann::ordered_json j;
        j["kind"] = "node";
        j["name"] = node.name;
        j["origin"] = to_string(node.origin);
        const Entity* e = graph.entity(node.name);
        j["degree"] = e ? e->degree : 0;
        os << j.dump() << "\n";
    }
    for (std::size_t id : sg.edges) {
        const Relationship& r = graph.relationship(id);
        nlohmann::ordered_json j;
        j["kind"] = "edge";
        j["id"] = id;
        j["src"] = r.src;
        j["dst"] = r.dst;
        j["description"] = r.description;
        if (r.weight) j["weight"] = *r.weight;
        os << j.dump() << "\n";
    }
    for (const auto& d : sg.descriptions) {
        nlohmann::ordered_json j;
        j["kind"] = "description";
        j["origin"] = to_string(d.origin);
        j["source"] = d.source;
        j["from_edge"] = d.from_edge;
        j["text"] = d.text;
        os << j.dump() << "\n";
    }
}

}  // namespace fgrag
