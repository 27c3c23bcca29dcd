#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fgrag/common.hpp"
#include "fgrag/llm.hpp"

namespace fgrag {

struct EmbeddingRecord {
    std::string entity_name;
    EmbeddingVector vector;
    std::uint64_t text_checksum = 0;  // checksum of the embedded text
};

struct MatchResult {
    std::string entity_name;
    double score = 0.0;  // cosine similarity in [-1, 1]
};

// Exact-scan vector store. Records live keyed by entity name; matching is an
// exhaustive cosine scan, results sorted by score descending with ties broken
// by ascending name. Deliberately exact — an ANN index can slot in behind the
// same surface later.
class VectorStore {
public:
    std::size_t size() const { return records_.size(); }
    std::size_t dim() const { return dim_; }
    bool empty() const { return records_.empty(); }
    void clear() {
        records_.clear();
        dim_ = 0;
    }

    // Later record for a name replaces the earlier one. A dimension mismatch
    // anywhere in the batch fails the whole call with no partial write.
    std::size_t upsert(const std::vector<EmbeddingRecord>& records) {
        if (records.empty()) return size();
        std::size_t d = dim_;
        for (const auto& r : records) {
            if (r.entity_name.empty()) throw ConfigError("embedding record requires a name");
            if (r.vector.empty()) throw ConfigError("embedding record requires a vector");
            if (d == 0) d = r.vector.size();
            if (r.vector.size() != d)
                throw ConfigError("dimension mismatch in upsert: expected " + std::to_string(d) +
                                  ", got " + std::to_string(r.vector.size()));
            for (float x : r.vector)
                if (!std::isfinite(x)) throw ConfigError("non-finite embedding component");
        }
        dim_ = d;
        for (const auto& r : records) {
            records_[r.entity_name] = Stored{r.vector, r.text_checksum, norm_of(r.vector)};
        }
        return size();
    }

    bool contains(const std::string& name) const { return records_.count(name) > 0; }

    const EmbeddingVector* vector_of(const std::string& name) const {
        auto it = records_.find(name);
        return it == records_.end() ? nullptr : &it->second.vector;
    }

    std::vector<MatchResult> match_top_k(const EmbeddingVector& query, std::size_t k) const {
        if (records_.empty()) return {};
        if (k == 0) throw ConfigError("match_top_k requires k >= 1");
        if (query.size() != dim_)
            throw ConfigError("query dimension " + std::to_string(query.size()) +
                              " does not match store dimension " + std::to_string(dim_));
        const double qnorm = norm_of(query);
        if (qnorm == 0.0) throw ConfigError("zero-norm query vector");

        std::vector<MatchResult> scored;
        scored.reserve(records_.size());
        for (const auto& [name, rec] : records_) {
            double score = 0.0;
            if (rec.norm > 0.0) score = dot(query, rec.vector) / (qnorm * rec.norm);
            scored.push_back(MatchResult{name, score});
        }
        std::sort(scored.begin(), scored.end(), [](const MatchResult& a, const MatchResult& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.entity_name < b.entity_name;
        });
        scored.resize(std::min(k, scored.size()));
        return scored;
    }

    // Name-sorted iteration (map order), used by persistence.
    std::vector<EmbeddingRecord> all_records() const {
        std::vector<EmbeddingRecord> out;
        out.reserve(records_.size());
        for (const auto& [name, rec] : records_)
            out.push_back(EmbeddingRecord{name, rec.vector, rec.text_checksum});
        return out;
    }

    // Binary format (all integers little-endian):
    //   [0,4)   magic "FGVS"
    //   [4,8)   u32 format version (currently 1)
    //   [8,12)  u32 dim
    //   [12,20) u64 count
    //   [20, 20 + count*dim*4)           float32 vectors, record-major
    //   then, per record, the name table entry:
    //       u32 name byte length, name bytes (UTF-8), u64 text checksum
    // Records are sorted by name, so identical stores serialize identically.
    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write vector store file: " + path.string());
        write_bytes(out, "FGVS", 4);
        write_u32(out, kFormatVersion);
        write_u32(out, static_cast<std::uint32_t>(dim_));
        write_u64(out, records_.size());
        for (const auto& [name, rec] : records_) {
            for (float x : rec.vector) write_f32(out, x);
        }
        for (const auto& [name, rec] : records_) {
            write_u32(out, static_cast<std::uint32_t>(name.size()));
            write_bytes(out, name.data(), name.size());
            write_u64(out, rec.text_checksum);
        }
        if (!out) throw IoError("short write to vector store file: " + path.string());
    }

    static VectorStore load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw PersistError("missing or unreadable vector file: " + path.string());
        char magic[4];
        read_bytes(in, magic, 4, path);
        if (std::memcmp(magic, "FGVS", 4) != 0)
            throw PersistError("bad magic in vector file: " + path.string());
        const std::uint32_t version = read_u32(in, path);
        if (version != kFormatVersion)
            throw PersistError("unsupported vector file version " + std::to_string(version));
        const std::uint32_t dim = read_u32(in, path);
        const std::uint64_t count = read_u64(in, path);
        if (dim == 0 && count > 0) throw PersistError("vector file has records but zero dim");

        std::vector<EmbeddingVector> vectors(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            vectors[i].resize(dim);
            for (std::uint32_t d = 0; d < dim; ++d) vectors[i][d] = read_f32(in, path);
        }
        VectorStore store;
        std::vector<EmbeddingRecord> records;
        records.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            const std::uint32_t len = read_u32(in, path);
            std::string name(len, '\0');
            read_bytes(in, name.data(), len, path);
            const std::uint64_t checksum = read_u64(in, path);
            records.push_back(EmbeddingRecord{std::move(name), std::move(vectors[i]), checksum});
        }
        try {
            store.upsert(records);
        } catch (const ConfigError& e) {
            throw PersistError(std::string("invalid vector file contents: ") + e.what());
        }
        if (store.size() != count)
            throw PersistError("duplicate names in vector file: " + path.string());
        return store;
    }

private:
    static constexpr std::uint32_t kFormatVersion = 1;

    struct Stored {
        EmbeddingVector vector;
        std::uint64_t text_checksum = 0;
        double norm = 0.0;
    };

    static double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        return acc;
    }

    static double norm_of(const EmbeddingVector& v) {
        double acc = 0.0;
        for (float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
        return std::sqrt(acc);
    }

    static void write_bytes(std::ostream& out, const char* data, std::size_t n) {
        out.write(data, static_cast<std::streamsize>(n));
    }
    static void write_u32(std::ostream& out, std::uint32_t v) {
        char buf[4];
        for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out.write(buf, 4);
    }
    static void write_u64(std::ostream& out, std::uint64_t v) {
        char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out.write(buf, 8);
    }
    static void write_f32(std::ostream& out, float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        write_u32(out, bits);
    }

    static void read_bytes(std::istream& in, char* data, std::size_t n,
                           const std::filesystem::path& path) {
        in.read(data, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw PersistError("truncated vector file: " + path.string());
    }
    static std::uint32_t read_u32(std::istream& in, const std::filesystem::path& path) {
        char buf[4];
        read_bytes(in, buf, 4, path);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
        return v;
    }
    static std::uint64_t read_u64(std::istream& in, const std::filesystem::path& path) {
        char buf[8];
        read_bytes(in, buf, 8, path);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
        return v;
    }
    static float read_f32(std::istream& in, const std::filesystem::path& path) {
        std::uint32_t bits = read_u32(in, path);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::size_t dim_ = 0;
    std::map<std::string, Stored> records_;
};

}  // namespace fgrag
