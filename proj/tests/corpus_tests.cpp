#include <catch_amalgamated.hpp>

#include "fgrag/corpus.hpp"
#include "oracles.hpp"

using namespace fgrag;

TEST_CASE("word tokenizer splits words and punctuation") {
    WordTokenizer tok;
    const std::string text = "Hello, world! x2";
    auto spans = tok.tokenize(text);
    std::vector<std::string> tokens;
    for (auto s : spans) tokens.push_back(text.substr(s.begin, s.end - s.begin));
    CHECK(tokens == std::vector<std::string>{"Hello", ",", "world", "!", "x2"});
    CHECK(tok.count("") == 0);
    CHECK(tok.count("   \n\t ") == 0);
}

TEST_CASE("unknown tokenizer id is rejected") {
    CHECK_THROWS_AS(make_tokenizer("bpe-9000"), ConfigError);
}

TEST_CASE("load_corpus orders documents lexicographically by relative path") {
    testutil::TempDir dir("corpus");
    testutil::write_file(dir.path() / "b.txt", "beta text");
    testutil::write_file(dir.path() / "a.txt", "alpha text");
    auto docs = load_corpus(dir.path());
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].id == "a.txt");
    CHECK(docs[1].id == "b.txt");
    CHECK(docs[0].text == "alpha text");
}

TEST_CASE("load_corpus on an empty directory yields an empty list") {
    testutil::TempDir dir("corpus");
    CHECK(load_corpus(dir.path()).empty());
}

TEST_CASE("load_corpus skips a zero-byte file with a warning") {
    testutil::TempDir dir("corpus");
    testutil::write_file(dir.path() / "empty.txt", "");
    CorpusLoadReport report;
    auto docs = load_corpus(dir.path(), &report);
    CHECK(docs.empty());
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("empty.txt") != std::string::npos);
}

TEST_CASE("load_corpus skips invalid encodings and continues") {
    testutil::TempDir dir("corpus");
    testutil::write_file(dir.path() / "bad.txt", std::string("ok \xFF\xFE broken", 14));
    testutil::write_file(dir.path() / "good.txt", "fine");
    CorpusLoadReport report;
    auto docs = load_corpus(dir.path(), &report);
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].id == "good.txt");
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("bad.txt") != std::string::npos);
}

TEST_CASE("load_corpus recurses and derives ids from relative paths") {
    testutil::TempDir dir("corpus");
    testutil::write_file(dir.path() / "sub" / "doc.md", "# nested");
    testutil::write_file(dir.path() / "top.txt", "top");
    testutil::write_file(dir.path() / "skip.bin", "binary");
    auto docs = load_corpus(dir.path());
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].id == "sub/doc.md");
    CHECK(docs[1].id == "top.txt");
}

TEST_CASE("load_corpus rejects a missing root") {
    CHECK_THROWS_AS(load_corpus("/nonexistent/fgrag-root"), IoError);
}

TEST_CASE("chunk_document: 2500 tokens at (1200,100) gives starts 0/1100/2200") {
    Document doc{"d", testutil::words_doc(2500), "d"};
    auto chunks = chunk_document(doc, ChunkConfig{1200, 100, "word-v1"});
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].start_token == 0);
    CHECK(chunks[1].start_token == 1100);
    CHECK(chunks[2].start_token == 2200);
    CHECK(chunks[0].end_token == 1200);
    CHECK(chunks[1].end_token == 2300);
    CHECK(chunks[2].end_token == 2500);
}

TEST_CASE("chunk_document: a 1200-token document is exactly one chunk") {
    Document doc{"d", testutil::words_doc(1200), "d"};
    auto chunks = chunk_document(doc, ChunkConfig{1200, 100, "word-v1"});
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].text == doc.text);
    CHECK(chunks[0].start_token == 0);
    CHECK(chunks[0].end_token == 1200);
}

TEST_CASE("chunk_document: 1201 tokens spill into a second chunk [1100,1201)") {
    Document doc{"d", testutil::words_doc(1201), "d"};
    auto chunks = chunk_document(doc, ChunkConfig{1200, 100, "word-v1"});
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[1].start_token == 1100);
    CHECK(chunks[1].end_token == 1201);
}

TEST_CASE("chunk_document: sub-token document gives an empty list") {
    Document doc{"d", "   \n  ", "d"};
    CHECK(chunk_document(doc, ChunkConfig{10, 3, "word-v1"}).empty());
}

TEST_CASE("chunk config invariants") {
    Document doc{"d", "one two", "d"};
    CHECK_THROWS_AS(chunk_document(doc, ChunkConfig{10, 10, "word-v1"}), ConfigError);
    CHECK_THROWS_AS(chunk_document(doc, ChunkConfig{0, 0, "word-v1"}), ConfigError);
}

namespace {

std::vector<std::string> token_strings(const std::string& text) {
    WordTokenizer tok;
    std::vector<std::string> out;
    for (auto s : tok.tokenize(text)) out.push_back(text.substr(s.begin, s.end - s.begin));
    return out;
}

}  // namespace

TEST_CASE("chunking laws: round-trip, count formula, oracle windows, determinism") {
    std::mt19937_64 rng(4242);
    const std::vector<std::pair<std::size_t, std::size_t>> cfgs = {{1200, 100}, {300, 50}, {10, 3}};
    for (int iter = 0; iter < 60; ++iter) {
        const auto [size, overlap] = cfgs[static_cast<std::size_t>(iter) % cfgs.size()];
        const std::size_t total = 1 + rng() % (10 * size);
        Document doc{"d" + std::to_string(iter), testutil::words_doc(total), "d"};
        const ChunkConfig cfg{size, overlap, "word-v1"};

        auto chunks = chunk_document(doc, cfg);
        auto windows = oracle::chunk_windows(total, size, overlap);

        REQUIRE(chunks.size() == windows.size());
        CHECK(chunks.size() == oracle::chunk_count_formula(total, size, overlap));
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            CHECK(chunks[i].start_token == windows[i].start);
            CHECK(chunks[i].end_token == windows[i].end);
            CHECK(chunks[i].index == i);
            CHECK(chunks[i].end_token - chunks[i].start_token <= size);
        }

        // Overlap-stripped concatenation reproduces the token sequence.
        const auto doc_tokens = token_strings(doc.text);
        std::vector<std::string> rebuilt;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            auto chunk_tokens = token_strings(chunks[i].text);
            REQUIRE(chunk_tokens.size() == chunks[i].end_token - chunks[i].start_token);
            const std::size_t skip = i == 0 ? 0 : overlap;
            rebuilt.insert(rebuilt.end(), chunk_tokens.begin() + static_cast<long>(skip),
                           chunk_tokens.end());
        }
        REQUIRE(rebuilt == doc_tokens);

        // Byte-for-byte determinism.
        auto again = chunk_document(doc, cfg);
        REQUIRE(again.size() == chunks.size());
        for (std::size_t i = 0; i < chunks.size(); ++i) CHECK(again[i].text == chunks[i].text);
    }
}

TEST_CASE("chunk dump emits one JSON record per chunk") {
    Document doc{"d", testutil::words_doc(25), "d"};
    auto chunks = chunk_document(doc, ChunkConfig{10, 3, "word-v1"});
    std::ostringstream os;
    dump_chunks_jsonl(chunks, os);
    auto lines = split_lines(os.str());
    REQUIRE(lines.size() == chunks.size());
    auto first = nlohmann::json::parse(lines[0]);
    CHECK(first["doc_id"] == "d");
    CHECK(first["start_token"] == 0);
    CHECK(first["end_token"] == 10);
}
