#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgrag/common.hpp"
#include "fgrag/tokenizer.hpp"

namespace fgrag {

struct Document {
    std::string id;           // stable, derived from the path relative to the corpus root
    std::string text;         // full document text
    std::string source_path;  // origin locator
};

struct Chunk {
    std::string doc_id;
    std::size_t index = 0;  // 0-based ordinal within the document
    std::size_t start_token = 0;
    std::size_t end_token = 0;  // half-open token span
    std::string text;
};

struct ChunkConfig {
    std::size_t chunk_size = 1200;
    std::size_t overlap_tokens = 100;
    std::string tokenizer_id = "word-v1";

    void validate() const {
        if (chunk_size == 0) throw ConfigError("chunk_size must be >= 1");
        if (overlap_tokens >= chunk_size)
            throw ConfigError("overlap_tokens must satisfy 0 <= overlap < chunk_size");
    }
};

struct CorpusLoadReport {
    std::vector<std::string> warnings;  // one entry per skipped file
};

namespace detail {
inline bool eligible_corpus_file(const std::filesystem::path& p) {
    auto ext = to_lower_ascii(p.extension().string());
    return ext == ".txt" || ext == ".text" || ext == ".md";
}
}  // namespace detail

// One Document per eligible plain-text file under root, ordered
// lexicographically by relative path. Empty and non-UTF-8 files are skipped
// with a recorded warning; the run continues.
inline std::vector<Document> load_corpus(const std::filesystem::path& root,
                                         CorpusLoadReport* report = nullptr) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::exists(root, ec) || !fs::is_directory(root, ec))
        throw IoError("corpus root is not a readable directory: " + root.string());

    std::vector<fs::path> files;
    for (auto it = fs::recursive_directory_iterator(root, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) throw IoError("failed to scan corpus root: " + ec.message());
        if (it->is_regular_file() && detail::eligible_corpus_file(it->path()))
            files.push_back(it->path());
    }

    std::vector<std::pair<std::string, fs::path>> keyed;
    keyed.reserve(files.size());
    for (const auto& p : files) {
        keyed.emplace_back(fs::relative(p, root).generic_string(), p);
    }
    std::sort(keyed.begin(), keyed.end());

    std::vector<Document> docs;
    for (const auto& [rel, path] : keyed) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            if (report) report->warnings.push_back("unreadable file skipped: " + rel);
            continue;
        }
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (trim_view(text).empty()) {
            if (report) report->warnings.push_back("empty file skipped: " + rel);
            continue;
        }
        if (!is_valid_utf8(text)) {
            if (report) report->warnings.push_back("invalid UTF-8 skipped: " + rel);
            continue;
        }
        docs.push_back(Document{rel, std::move(text), path.string()});
    }
    return docs;
}

// Sliding-window chunking. Chunk i starts at token i*(chunk_size - overlap);
// consecutive chunks share exactly overlap_tokens tokens except that the final
// chunk may be shorter. Chunk text is the byte range of the source text
// spanned by its tokens, so tokenizing a chunk reproduces its token slice.
inline std::vector<Chunk> chunk_document(const Document& doc, const ChunkConfig& cfg) {
    cfg.validate();
    auto tok = make_tokenizer(cfg.tokenizer_id);
    const std::vector<TokenSpan> tokens = tok->tokenize(doc.text);
    const std::size_t total = tokens.size();
    std::vector<Chunk> chunks;
    if (total == 0) return chunks;

    const std::size_t stride = cfg.chunk_size - cfg.overlap_tokens;
    for (std::size_t i = 0;; ++i) {
        const std::size_t start = i * stride;
        if (i > 0 && start + cfg.overlap_tokens >= total) break;
        const std::size_t end = std::min(start + cfg.chunk_size, total);
        Chunk c;
        c.doc_id = doc.id;
        c.index = i;
        c.start_token = start;
        c.end_token = end;
        c.text = doc.text.substr(tokens[start].begin, tokens[end - 1].end - tokens[start].begin);
        chunks.push_back(std::move(c));
        if (end == total) break;
    }
    return chunks;
}

inline void dump_chunks_jsonl(const std::vector<Chunk>& chunks, std::ostream& os) {
    for (const auto& c : chunks) {
        nlohmann::ordered_json j;
        j["doc_id"] = c.doc_id;
        j["index"] = c.index;
        j["start_token"] = c.start_token;
        j["end_token"] = c.end_token;
        j["text"] = c.text;
        os << j.dump() << "\n";
    }
}

}  // namespace fgrag
