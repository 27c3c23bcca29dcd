#include <catch_amalgamated.hpp>

#include <cstdlib>

#include <json.hpp>

#include "fgrag/common.hpp"
#include "oracles.hpp"

// End-to-end tests of the installed binary; FGRAG_CLI_PATH comes from CMake.

namespace {

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args, const std::filesystem::path& scratch) {
    const auto out_path = scratch / "stdout.txt";
    const auto err_path = scratch / "stderr.txt";
    const std::string cmd = std::string(FGRAG_CLI_PATH) + " " + args + " > " +
                            out_path.string() + " 2> " + err_path.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = testutil::read_file(out_path);
    r.err = testutil::read_file(err_path);
    return r;
}

void write_corpus(const std::filesystem::path& dir) {
    testutil::write_file(dir / "bees.txt",
                         "Beekeepers in the valley harvest honey from wooden hives each autumn. "
                         "The honey is sold at farmers markets alongside beeswax candles and "
                         "other hive products. Local cooperatives help beekeepers with packaging "
                         "and marketing strategies for their hive products.");
    testutil::write_file(dir / "markets.txt",
                         "Farmers markets connect rural producers with urban customers. Vendors "
                         "rely on attractive packaging and social media promotion to reach "
                         "buyers. Seasonal festivals boost sales of regional specialties like "
                         "honey and cheese across the region.");
}

std::string file_crc(const std::filesystem::path& p) {
    return fgrag::hex_u32(fgrag::crc32(testutil::read_file(p)));
}

}  // namespace

TEST_CASE("cli: indexing twice with the same seed gives identical index checksums") {
    testutil::TempDir dir("cli");
    write_corpus(dir.path() / "corpus");
    auto r1 = run_cli("index --corpus " + (dir.path() / "corpus").string() + " --out " +
                          (dir.path() / "idx1").string() + " --mock-seed 7",
                      dir.path());
    REQUIRE(r1.exit_code == 0);
    auto r2 = run_cli("index --corpus " + (dir.path() / "corpus").string() + " --out " +
                          (dir.path() / "idx2").string() + " --mock-seed 7",
                      dir.path());
    REQUIRE(r2.exit_code == 0);
    for (const char* name :
         {"manifest.json", "entities.jsonl", "relationships.jsonl", "vectors.bin"}) {
        INFO(name);
        CHECK(file_crc(dir.path() / "idx1" / name) == file_crc(dir.path() / "idx2" / name));
    }
    CHECK(r1.out.find("Graph Indexing Tokens:") != std::string::npos);
    CHECK(r1.out.find("Query Tokens:") != std::string::npos);
}

TEST_CASE("cli: query answers, writes JSON, and its usage matches the gateway report") {
    testutil::TempDir dir("cli");
    write_corpus(dir.path() / "corpus");
    REQUIRE(run_cli("index --corpus " + (dir.path() / "corpus").string() + " --out " +
                        (dir.path() / "idx").string() + " --mock-seed 7",
                    dir.path())
                .exit_code == 0);

    const auto json_path = dir.path() / "answer.json";
    auto r = run_cli("query --index " + (dir.path() / "idx").string() +
                         " --q \"How can beekeepers market and sell their honey?\""
                         " --mock-seed 7 --json " + json_path.string(),
                     dir.path());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("# How can beekeepers") != std::string::npos);

    auto j = nlohmann::json::parse(testutil::read_file(json_path));
    CHECK(j.at("query") == "How can beekeepers market and sell their honey?");
    CHECK(!j.at("answer").get<std::string>().empty());
    REQUIRE(j.contains("entities"));
    REQUIRE(j.contains("usage_report"));

    // Answer usage equals the sum of the query-phase completion templates in
    // the gateway's own report.
    std::int64_t completion_template_total = 0;
    for (const char* tmpl :
         {"decompose_query", "formulate_questions", "summarize_entity", "compose_answer"}) {
        if (j["usage_report"]["per_template"].contains(tmpl)) {
            const auto& t = j["usage_report"]["per_template"][tmpl];
            completion_template_total += t.value("prompt_tokens", std::int64_t{0}) +
                                         t.value("completion_tokens", std::int64_t{0});
        }
    }
    CHECK(j["usage"]["total_tokens"].get<std::int64_t>() == completion_template_total);

    // Config echo and template provenance ride along.
    CHECK(j.at("config").at("backend") == "mock");
    CHECK(j.at("template_checksums").size() == 8);
}

TEST_CASE("cli: identical queries with identical seeds give identical JSON") {
    testutil::TempDir dir("cli");
    write_corpus(dir.path() / "corpus");
    REQUIRE(run_cli("index --corpus " + (dir.path() / "corpus").string() + " --out " +
                        (dir.path() / "idx").string() + " --mock-seed 3",
                    dir.path())
                .exit_code == 0);
    auto once = run_cli("query --index " + (dir.path() / "idx").string() +
                            " --q \"honey sales\" --mock-seed 3 --json " +
                            (dir.path() / "a1.json").string(),
                        dir.path());
    auto twice = run_cli("query --index " + (dir.path() / "idx").string() +
                             " --q \"honey sales\" --mock-seed 3 --json " +
                             (dir.path() / "a2.json").string(),
                         dir.path());
    REQUIRE(once.exit_code == 0);
    REQUIRE(twice.exit_code == 0);
    CHECK(testutil::read_file(dir.path() / "a1.json") ==
          testutil::read_file(dir.path() / "a2.json"));
}

TEST_CASE("cli: stats on an index of an empty corpus prints zero counts, exit 0") {
    testutil::TempDir dir("cli");
    std::filesystem::create_directories(dir.path() / "empty-corpus");
    REQUIRE(run_cli("index --corpus " + (dir.path() / "empty-corpus").string() + " --out " +
                        (dir.path() / "idx").string() + " --mock-seed 1",
                    dir.path())
                .exit_code == 0);
    auto r = run_cli("stats --index " + (dir.path() / "idx").string(), dir.path());
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("entities: 0") != std::string::npos);
    CHECK(r.out.find("relationships: 0") != std::string::npos);
}

TEST_CASE("cli: dump-subgraph emits parseable JSONL with origin tags") {
    testutil::TempDir dir("cli");
    write_corpus(dir.path() / "corpus");
    REQUIRE(run_cli("index --corpus " + (dir.path() / "corpus").string() + " --out " +
                        (dir.path() / "idx").string() + " --mock-seed 7",
                    dir.path())
                .exit_code == 0);
    auto r = run_cli("dump-subgraph --index " + (dir.path() / "idx").string() +
                         " --q honey --mock-seed 7",
                     dir.path());
    REQUIRE(r.exit_code == 0);
    auto lines = fgrag::split_lines(r.out);
    REQUIRE(!lines.empty());
    bool saw_node = false;
    for (const auto& line : lines) {
        auto j = nlohmann::json::parse(line, nullptr, false);
        REQUIRE(!j.is_discarded());
        if (j["kind"] == "node") {
            saw_node = true;
            CHECK((j["origin"] == "weak" || j["origin"] == "strong" || j["origin"] == "bfs"));
        }
    }
    CHECK(saw_node);
}

TEST_CASE("cli: batch-query writes evaluation-ready answers") {
    testutil::TempDir dir("cli");
    write_corpus(dir.path() / "corpus");
    REQUIRE(run_cli("index --corpus " + (dir.path() / "corpus").string() + " --out " +
                        (dir.path() / "idx").string() + " --mock-seed 7",
                    dir.path())
                .exit_code == 0);
    testutil::write_file(dir.path() / "queries.txt",
                         "How is honey sold?\nWho visits farmers markets?\n");
    auto r = run_cli("batch-query --index " + (dir.path() / "idx").string() + " --queries " +
                         (dir.path() / "queries.txt").string() + " --out " +
                         (dir.path() / "answers.jsonl").string() +
                         " --mock-seed 7 --system-name fgrag",
                     dir.path());
    REQUIRE(r.exit_code == 0);
    auto lines = fgrag::split_lines(testutil::read_file(dir.path() / "answers.jsonl"));
    REQUIRE(lines.size() == 2);
    auto first = nlohmann::json::parse(lines[0]);
    CHECK(first.at("query_id") == "q1");
    CHECK(first.at("system") == "fgrag");
    CHECK(!first.at("text").get<std::string>().empty());
    CHECK(first.at("query") == "How is honey sold?");
}

TEST_CASE("cli: eval-qfs generates 125 queries with lineage") {
    testutil::TempDir dir("cli");
    write_corpus(dir.path() / "corpus");
    auto r = run_cli("eval-qfs --generate --corpus " + (dir.path() / "corpus").string() +
                         " --out " + (dir.path() / "queries.jsonl").string() + " --mock-seed 7",
                     dir.path());
    REQUIRE(r.exit_code == 0);
    auto lines = fgrag::split_lines(testutil::read_file(dir.path() / "queries.jsonl"));
    REQUIRE(lines.size() == 125);
    std::set<std::pair<int, int>> cells;
    std::set<std::string> ids;
    for (const auto& line : lines) {
        auto j = nlohmann::json::parse(line);
        cells.insert({j.at("user").get<int>(), j.at("task").get<int>()});
        ids.insert(j.at("query_id").get<std::string>());
    }
    CHECK(cells.size() == 25);
    CHECK(ids.size() == 125);
}

TEST_CASE("cli: eval-qfs judges two answer files into win rates and an audit log") {
    testutil::TempDir dir("cli");
    std::string answers_a, answers_b;
    for (int i = 0; i < 4; ++i) {
        const std::string id = "q" + std::to_string(i);
        answers_a += nlohmann::json{{"query_id", id},
                                    {"system", "alpha"},
                                    {"text", "a detailed structured answer " + std::to_string(i)},
                                    {"query", "question " + std::to_string(i) + "?"}}
                         .dump() +
                     "\n";
        answers_b += nlohmann::json{{"query_id", id},
                                    {"system", "bravo"},
                                    {"text", "a different reply body " + std::to_string(i)}}
                         .dump() +
                     "\n";
    }
    testutil::write_file(dir.path() / "a.jsonl", answers_a);
    testutil::write_file(dir.path() / "b.jsonl", answers_b);

    auto r = run_cli("eval-qfs --answers-a " + (dir.path() / "a.jsonl").string() +
                         " --answers-b " + (dir.path() / "b.jsonl").string() + " --out-csv " +
                         (dir.path() / "rates.csv").string() + " --audit " +
                         (dir.path() / "audit.jsonl").string() + " --mock-seed 7",
                     dir.path());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("| Metric | alpha | bravo |") != std::string::npos);

    auto csv = testutil::read_file(dir.path() / "rates.csv");
    CHECK(csv.rfind("metric,alpha,bravo", 0) == 0);

    auto audit_lines = fgrag::split_lines(testutil::read_file(dir.path() / "audit.jsonl"));
    CHECK(audit_lines.size() == 4 * 2 * 4);  // queries x orderings x metrics
    auto d = nlohmann::json::parse(audit_lines[0]);
    CHECK(d.contains("metric"));
    CHECK(d.contains("winner"));
    CHECK(d.contains("order_tag"));
}

TEST_CASE("cli: eval-multihop scores a fixture by exact match") {
    testutil::TempDir dir("cli");
    std::string gold, pred;
    gold += nlohmann::json{{"query_id", "m1"}, {"query", "capital?"}, {"answer", "Paris"},
                           {"category", "inference"}}
                .dump() +
            "\n";
    gold += nlohmann::json{{"query_id", "m2"}, {"query", "same?"}, {"answer", "yes"},
                           {"category", "comparison"}}
                .dump() +
            "\n";
    gold += nlohmann::json{{"query_id", "m3"}, {"query", "order?"}, {"answer", "before"},
                           {"category", "temporal"}}
                .dump() +
            "\n";
    pred += nlohmann::json{{"query_id", "m1"}, {"system", "s"}, {"text", "PARIS"}}.dump() + "\n";
    pred += nlohmann::json{{"query_id", "m2"}, {"system", "s"}, {"text", "no"}}.dump() + "\n";
    testutil::write_file(dir.path() / "gold.jsonl", gold);
    testutil::write_file(dir.path() / "pred.jsonl", pred);

    auto r = run_cli("eval-multihop --gold " + (dir.path() / "gold.jsonl").string() + " --pred " +
                         (dir.path() / "pred.jsonl").string() + " --out-csv " +
                         (dir.path() / "acc.csv").string(),
                     dir.path());
    REQUIRE(r.exit_code == 0);
    auto csv = testutil::read_file(dir.path() / "acc.csv");
    CHECK(csv.find("inference,1,1,100.00") != std::string::npos);
    CHECK(csv.find("comparison,0,1,0.00") != std::string::npos);
    CHECK(csv.find("temporal,0,1,0.00") != std::string::npos);
    CHECK(csv.find("overall,1,3,33.33") != std::string::npos);
}

TEST_CASE("cli: bad flags give usage text and a nonzero exit") {
    testutil::TempDir dir("cli");
    auto r = run_cli("query --definitely-not-a-flag", dir.path());
    CHECK(r.exit_code != 0);
    CHECK(!r.err.empty());
}

TEST_CASE("cli: runtime failures emit one structured error line on stderr") {
    testutil::TempDir dir("cli");
    auto r = run_cli("stats --index " + (dir.path() / "missing-index").string(), dir.path());
    CHECK(r.exit_code == 1);
    auto j = nlohmann::json::parse(fgrag::split_lines(r.err).back(), nullptr, false);
    REQUIRE(!j.is_discarded());
    CHECK(j.at("error").at("type") == "persist_error");
}

TEST_CASE("cli: config precedence is flags over file over defaults") {
    testutil::TempDir dir("cli");
    write_corpus(dir.path() / "corpus");
    testutil::write_file(dir.path() / "run.conf",
                         "# comment line\n"
                         "top_n_weak = 9\n"
                         "bfs_depth = 2\n");
    auto r = run_cli("index --corpus " + (dir.path() / "corpus").string() + " --out " +
                         (dir.path() / "idx").string() + " --mock-seed 7 --config " +
                         (dir.path() / "run.conf").string() + " --bfs-depth 3 --show-config",
                     dir.path());
    REQUIRE(r.exit_code == 0);
    auto j = nlohmann::json::parse(r.out.substr(0, r.out.find("}\n") + 2));
    CHECK(j.at("top_n_weak") == 9);     // from the file
    CHECK(j.at("bfs_depth") == 3);      // flag wins
    CHECK(j.at("chunk_size") == 1200);  // default

    auto bad = run_cli("index --corpus x --out y --config " + (dir.path() / "bad.conf").string(),
                       dir.path());
    CHECK(bad.exit_code != 0);
}

TEST_CASE("cli: unknown config keys are rejected by name") {
    testutil::TempDir dir("cli");
    testutil::write_file(dir.path() / "bad.conf", "definitely_unknown = 1\n");
    auto r = run_cli("stats --index x --config " + (dir.path() / "bad.conf").string(), dir.path());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("definitely_unknown") != std::string::npos);
}
