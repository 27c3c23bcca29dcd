#pragma once

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "fgrag/common.hpp"
#include "fgrag/graph.hpp"
#include "fgrag/vector_store.hpp"

namespace fgrag {

// Index directory layout:
//   manifest.json        run metadata, config snapshot, per-file CRC-32s
//   entities.jsonl       one entity per line, sorted by canonical name
//   relationships.jsonl  one relationship per line, insertion order
//   vectors.bin          binary vector store (format in vector_store.hpp)
// Writes go to *.tmp siblings first and are renamed data-files-first,
// manifest last, so a crashed save leaves the previous index loadable.
struct IndexManifest {
    int format_major = 1;
    int format_minor = 0;
    std::string tokenizer_id = "word-v1";
    std::size_t embedding_dim = 0;
    std::size_t entity_count = 0;
    std::size_t relationship_count = 0;
    std::string created_at;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    std::map<std::string, std::string> template_checksums;
    std::map<std::string, std::string> file_checksums;  // name -> crc32 hex
    nlohmann::ordered_json indexing_usage;              // build-time token report
};

namespace detail {

inline const char* kManifestFile = "manifest.json";
inline const char* kEntitiesFile = "entities.jsonl";
inline const char* kRelationshipsFile = "relationships.jsonl";
inline const char* kVectorsFile = "vectors.bin";

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PersistError("missing index file: " + path.filename().string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

// UTC timestamp; honors SOURCE_DATE_EPOCH for reproducible runs.
inline std::string current_timestamp_utc(std::optional<std::int64_t> forced_epoch = {}) {
    std::time_t t;
    if (forced_epoch) {
        t = static_cast<std::time_t>(*forced_epoch);
    } else if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) {
        t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
    } else {
        t = std::time(nullptr);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline nlohmann::ordered_json manifest_to_json(const IndexManifest& m) {
    nlohmann::ordered_json j;
    j["format_version"] = {{"major", m.format_major}, {"minor", m.format_minor}};
    j["tokenizer_id"] = m.tokenizer_id;
    j["embedding_dim"] = m.embedding_dim;
    j["entity_count"] = m.entity_count;
    j["relationship_count"] = m.relationship_count;
    j["created_at"] = m.created_at;
    j["config"] = m.config;
    j["template_checksums"] = m.template_checksums;
    j["file_checksums"] = m.file_checksums;
    if (!m.indexing_usage.is_null()) j["indexing_usage"] = m.indexing_usage;
    return j;
}

inline IndexManifest manifest_from_json(const nlohmann::json& j) {
    IndexManifest m;
    try {
        m.format_major = j.at("format_version").at("major").get<int>();
        m.format_minor = j.at("format_version").at("minor").get<int>();
        m.tokenizer_id = j.at("tokenizer_id").get<std::string>();
        m.embedding_dim = j.at("embedding_dim").get<std::size_t>();
        m.entity_count = j.at("entity_count").get<std::size_t>();
        m.relationship_count = j.at("relationship_count").get<std::size_t>();
        m.created_at = j.at("created_at").get<std::string>();
        m.config = j.value("config", nlohmann::json::object());
        m.template_checksums =
            j.value("template_checksums", std::map<std::string, std::string>{});
        m.file_checksums = j.value("file_checksums", std::map<std::string, std::string>{});
        if (j.contains("indexing_usage")) m.indexing_usage = j["indexing_usage"];
    } catch (const nlohmann::json::exception& e) {
        throw PersistError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

inline std::string entities_to_jsonl(const KnowledgeGraph& graph) {
    std::string out;
    for (const auto& [name, e] : graph.entities()) {
        nlohmann::ordered_json j;
        j["name"] = e.canonical_name;
        j["type"] = e.type_tag;
        nlohmann::ordered_json descs = nlohmann::ordered_json::array();
        for (const auto& d : e.descriptions) {
            descs.push_back({{"text", d.text},
                             {"doc", d.source.doc_id},
                             {"chunk", d.source.chunk_index}});
        }
        j["descriptions"] = std::move(descs);
        j["degree"] = e.degree;
        out += j.dump();
        out += "\n";
    }
    return out;
}

inline std::string relationships_to_jsonl(const KnowledgeGraph& graph) {
    std::string out;
    for (const auto& r : graph.relationships()) {
        nlohmann::ordered_json j;
        j["src"] = r.src;
        j["dst"] = r.dst;
        j["description"] = r.description;
        if (r.weight) j["weight"] = *r.weight;
        j["doc"] = r.source.doc_id;
        j["chunk"] = r.source.chunk_index;
        out += j.dump();
        out += "\n";
    }
    return out;
}

inline void save_index(const KnowledgeGraph& graph, const VectorStore& store,
                       IndexManifest manifest, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create index directory: " + dir.string());

    const std::string entities = entities_to_jsonl(graph);
    const std::string relationships = relationships_to_jsonl(graph);

    const fs::path vec_tmp = dir / (std::string(detail::kVectorsFile) + ".tmp");
    store.save(vec_tmp);
    const std::string vec_bytes = detail::read_file_bytes(vec_tmp);

    manifest.embedding_dim = store.dim();
    manifest.entity_count = graph.entity_count();
    manifest.relationship_count = graph.relationship_count();
    manifest.file_checksums[detail::kEntitiesFile] = hex_u32(crc32(entities));
    manifest.file_checksums[detail::kRelationshipsFile] = hex_u32(crc32(relationships));
    manifest.file_checksums[detail::kVectorsFile] = hex_u32(crc32(vec_bytes));
    const std::string manifest_bytes = manifest_to_json(manifest).dump(2) + "\n";

    detail::write_file_atomic(dir / detail::kEntitiesFile, entities);
    detail::write_file_atomic(dir / detail::kRelationshipsFile, relationships);
    fs::rename(vec_tmp, dir / detail::kVectorsFile);
    // Manifest rename is the commit point: its checksums only validate
    // against the new data files.
    detail::write_file_atomic(dir / detail::kManifestFile, manifest_bytes);
}

struct LoadedIndex {
    KnowledgeGraph graph;
    VectorStore store;
    IndexManifest manifest;
};

inline LoadedIndex load_index(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;

    const std::string manifest_bytes = detail::read_file_bytes(dir / detail::kManifestFile);
    nlohmann::json mj = nlohmann::json::parse(manifest_bytes, nullptr, false);
    if (mj.is_discarded()) throw PersistError("manifest.json is not valid JSON");
    IndexManifest manifest = manifest_from_json(mj);
    if (manifest.format_major != 1)
        throw PersistError("unsupported index format_version major " +
                           std::to_string(manifest.format_major) + " (expected 1)");

    auto checked_read = [&](const char* name) {
        const std::string bytes = detail::read_file_bytes(dir / name);
        auto it = manifest.file_checksums.find(name);
        if (it == manifest.file_checksums.end())
            throw PersistError(std::string("manifest lacks a checksum for ") + name);
        if (hex_u32(crc32(bytes)) != it->second)
            throw PersistError(std::string("checksum mismatch for ") + name);
        return bytes;
    };

    const std::string entities_bytes = checked_read(detail::kEntitiesFile);
    const std::string relationships_bytes = checked_read(detail::kRelationshipsFile);
    checked_read(detail::kVectorsFile);  // content validated before parsing

    LoadedIndex out;
    out.manifest = manifest;

    for (const auto& line : split_lines(entities_bytes)) {
        if (trim_view(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw PersistError("bad JSON line in entities.jsonl");
        Entity e;
        try {
            e.canonical_name = j.at("name").get<std::string>();
            e.type_tag = j.value("type", "");
            for (const auto& d : j.at("descriptions")) {
                EntityDescription desc;
                desc.text = d.at("text").get<std::string>();
                desc.source.doc_id = d.value("doc", "");
                desc.source.chunk_index = d.value("chunk", std::size_t{0});
                e.descriptions.push_back(std::move(desc));
            }
        } catch (const nlohmann::json::exception& ex) {
            throw PersistError(std::string("malformed entity record: ") + ex.what());
        }
        if (e.canonical_name.empty()) throw PersistError("entity record with empty name");
        if (out.graph.has_entity(e.canonical_name))
            throw PersistError("duplicate entity name in entities.jsonl: " + e.canonical_name);
        out.graph.upsert_entity(e);
    }

    for (const auto& line : split_lines(relationships_bytes)) {
        if (trim_view(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw PersistError("bad JSON line in relationships.jsonl");
        Relationship r;
        try {
            r.src = j.at("src").get<std::string>();
            r.dst = j.at("dst").get<std::string>();
            r.description = j.value("description", "");
            if (j.contains("weight")) r.weight = j["weight"].get<double>();
            r.source.doc_id = j.value("doc", "");
            r.source.chunk_index = j.value("chunk", std::size_t{0});
        } catch (const nlohmann::json::exception& ex) {
            throw PersistError(std::string("malformed relationship record: ") + ex.what());
        }
        if (!out.graph.has_entity(normalize_entity_name(r.src)) ||
            !out.graph.has_entity(normalize_entity_name(r.dst)))
            throw PersistError("relationship references an unknown entity: " + r.src + " -> " +
                               r.dst);
        out.graph.add_relationship(std::move(r));
    }

    out.store = VectorStore::load(dir / detail::kVectorsFile);

    // Cross-file consistency, then full structural revalidation.
    if (out.store.dim() != manifest.embedding_dim && out.store.size() > 0)
        throw PersistError("manifest embedding_dim " + std::to_string(manifest.embedding_dim) +
                           " does not match vector file dim " + std::to_string(out.store.dim()));
    if (out.graph.entity_count() != manifest.entity_count)
        throw PersistError("manifest entity_count does not match entities.jsonl");
    if (out.graph.relationship_count() != manifest.relationship_count)
        throw PersistError("manifest relationship_count does not match relationships.jsonl");
    try {
        out.graph.validate();
    } catch (const Error& e) {
        throw PersistError(std::string("loaded graph failed validation: ") + e.what());
    }
    return out;
}

}  // namespace fgrag
