#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fgrag/common.hpp"

namespace fgrag {

// (doc, chunk ordinal) provenance of an extracted element.
struct SourceRef {
    std::string doc_id;
    std::size_t chunk_index = 0;

    friend bool operator==(const SourceRef&, const SourceRef&) = default;
};

struct EntityMention {
    std::string name;
    std::string type_tag;
    std::string description;
    SourceRef source;
};

struct EntityDescription {
    std::string text;
    SourceRef source;

    friend bool operator==(const EntityDescription&, const EntityDescription&) = default;
};

// Post-merge node: one per normalized name, descriptions in first-seen order.
struct Entity {
    std::string canonical_name;
    std::string type_tag;  // first non-empty tag among merged mentions
    std::vector<EntityDescription> descriptions;
    std::size_t degree = 0;  // maintained: number of incident relationships
};

struct Relationship {
    std::string src;  // canonical names after graph assembly
    std::string dst;
    std::string description;
    std::optional<double> weight;
    SourceRef source;
};

// Canonical entity key: case-fold + trim + internal-whitespace collapse.
inline std::string normalize_entity_name(std::string_view name) {
    return to_lower_ascii(collapse_whitespace(name));
}

// Entities keyed by canonical name (sorted, so iteration is deterministic),
// relationships in insertion order, and a name -> relationship-id adjacency
// index maintained alongside.
class KnowledgeGraph {
public:
    using AdjacencyIndex = std::map<std::string, std::vector<std::size_t>>;

    bool has_entity(const std::string& canonical_name) const {
        return entities_.count(canonical_name) > 0;
    }

    const Entity* entity(const std::string& canonical_name) const {
        auto it = entities_.find(canonical_name);
        return it == entities_.end() ? nullptr : &it->second;
    }

    // Inserts or extends an entity; descriptions append in call order.
    void upsert_entity(const Entity& e) {
        auto [it, inserted] = entities_.try_emplace(e.canonical_name, e);
        if (!inserted) {
            Entity& existing = it->second;
            if (existing.type_tag.empty()) existing.type_tag = e.type_tag;
            existing.descriptions.insert(existing.descriptions.end(), e.descriptions.begin(),
                                         e.descriptions.end());
        }
    }

    // Endpoints are normalized; unknown endpoints become placeholder entities
    // with no descriptions so the edge stays traversable.
    std::size_t add_relationship(Relationship rel) {
        rel.src = normalize_entity_name(rel.src);
        rel.dst = normalize_entity_name(rel.dst);
        if (rel.src.empty() || rel.dst.empty())
            throw ParseError("relationship endpoint name is empty");
        ensure_entity(rel.src);
        ensure_entity(rel.dst);
        const std::size_t id = relationships_.size();
        adjacency_[rel.src].push_back(id);
        entities_.at(rel.src).degree += 1;
        if (rel.dst != rel.src) {
            adjacency_[rel.dst].push_back(id);
            entities_.at(rel.dst).degree += 1;
        }
        relationships_.push_back(std::move(rel));
        return id;
    }

    const std::map<std::string, Entity>& entities() const { return entities_; }
    const std::vector<Relationship>& relationships() const { return relationships_; }
    const Relationship& relationship(std::size_t id) const { return relationships_.at(id); }

    const std::vector<std::size_t>& adjacent_relationships(const std::string& name) const {
        static const std::vector<std::size_t> kEmpty;
        auto it = adjacency_.find(name);
        return it == adjacency_.end() ? kEmpty : it->second;
    }

    std::size_t entity_count() const { return entities_.size(); }
    std::size_t relationship_count() const { return relationships_.size(); }

    std::map<std::size_t, std::size_t> degree_histogram() const {
        std::map<std::size_t, std::size_t> hist;
        for (const auto& [name, e] : entities_) hist[e.degree] += 1;
        return hist;
    }

    // Full adjacency rebuild compared against the maintained index; also
    // checks referential integrity and degree bookkeeping.
    void validate() const {
        AdjacencyIndex rebuilt;
        std::map<std::string, std::size_t> degrees;
        for (std::size_t id = 0; id < relationships_.size(); ++id) {
            const Relationship& r = relationships_[id];
            if (!has_entity(r.src) || !has_entity(r.dst))
                throw Error("dangling relationship endpoint: " + r.src + " -> " + r.dst);
            rebuilt[r.src].push_back(id);
            degrees[r.src] += 1;
            if (r.dst != r.src) {
                rebuilt[r.dst].push_back(id);
                degrees[r.dst] += 1;
            }
        }
        if (rebuilt != adjacency_) throw Error("adjacency index inconsistent with relationships");
        for (const auto& [name, e] : entities_) {
            auto it = degrees.find(name);
            const std::size_t expected = it == degrees.end() ? 0 : it->second;
            if (e.degree != expected)
                throw Error("entity degree drifted for '" + name + "'");
        }
    }

private:
    void ensure_entity(const std::string& canonical_name) {
        entities_.try_emplace(canonical_name, Entity{canonical_name, "", {}, 0});
    }

    std::map<std::string, Entity> entities_;
    std::vector<Relationship> relationships_;
    AdjacencyIndex adjacency_;
};

}  // namespace fgrag
