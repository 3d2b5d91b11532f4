#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "cret/error.hpp"
#include "cret/io.hpp"
#include "cret/synth.hpp"

using namespace cret;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("cret_io_" + std::to_string(std::random_device{}()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SynthDataset tiny() {
  SynthConfig c;
  c.dim = 8;
  c.scripts = {"CS"};
  c.chars_per_script = 4;
  c.char_pool = 5;
  c.zero_shot_chars = 2;
  return generate(c);
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("embeddings round trip exactly") {
  const auto ds = tiny();
  TempDir dir;
  write_embeddings(dir.path / "e.jsonl", ds.embeddings);
  const auto back = read_embeddings(dir.path / "e.jsonl");
  REQUIRE(back.size() == ds.embeddings.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == ds.embeddings[i].id);
    CHECK(back[i].script == ds.embeddings[i].script);
    CHECK(back[i].character == ds.embeddings[i].character);
    CHECK(back[i].kind == ds.embeddings[i].kind);
    CHECK(back[i].values == ds.embeddings[i].values);
  }
  const auto provider = load_file_provider(dir.path / "e.jsonl", PostMapKind::Identity, 0);
  CHECK(provider.dim() == 8);
}

TEST_CASE("manifest round trip") {
  const auto ds = tiny();
  std::istringstream in(manifest_to_jsonl(ds.manifest));
  CHECK(manifest_from_jsonl(in).records == ds.manifest.records);
}

TEST_CASE("parse errors") {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return embeddings_from_jsonl(in);
  };
  CHECK(parse("\n  \n").empty());
  CHECK_THROWS_AS(parse("{not json"), ParseError);
  CHECK_THROWS_AS(parse(R"({"id":"a","kind":"image","dim":2})"), ParseError);
  CHECK_THROWS_AS(parse(R"({"id":"a","kind":"photo","dim":1,"values":[1]})"), ParseError);
  CHECK_THROWS_AS(parse(R"({"id":"a","kind":"image","dim":3,"values":[1,2]})"), ParseError);
  CHECK_THROWS_AS(parse("{\"id\":\"a\",\"kind\":\"image\",\"dim\":1,\"values\":[1]}\n"
                        "{\"id\":\"b\",\"kind\":\"image\",\"dim\":2,\"values\":[1,2]}"),
                  ParseError);
  CHECK_THROWS_AS(parse("{\"id\":\"a\",\"kind\":\"image\",\"dim\":1,\"values\":[1]}\n"
                        "{\"id\":\"a\",\"kind\":\"image\",\"dim\":1,\"values\":[2]}"),
                  ParseError);
  std::istringstream bad_split(R"({"id":"a","kind":"image","split":"dev"})");
  CHECK_THROWS_AS(manifest_from_jsonl(bad_split), ParseError);
  CHECK_THROWS_AS(read_embeddings("/nonexistent/e.jsonl"), IoError);
}

TEST_CASE("run config round trip and digest") {
  RunConfig c;
  c.seed = 42;
  c.mode = RunMode::GoldRouting;
  c.buffer_capacity = 123;
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(config_digest(back) == config_digest(c));
  CHECK(config_digest(c).size() == 64);
  RunConfig d = c;
  d.seed = 43;
  CHECK(config_digest(d) != config_digest(c));
  CHECK_THROWS_AS(run_config_from_json(json::array()), ParseError);
}

TEST_CASE("model state round trips") {
  const SiaParams sia = sia_init(8, 3, 1);
  CHECK(sia_from_json(to_json(sia)) == sia);
  const RouterParams router = router_init(8, 16, 2, 4);
  CHECK(router_from_json(to_json(router)) == router);
  LabeledEmbeddings d;
  d.embeddings = Matrix::Identity(3, 3);
  d.keys = {{0, 0}, {0, 1}, {1, 0}};
  const PrototypeBank bank = build_bank(d, {});
  CHECK(bank_from_json(to_json(bank)) == bank);
  CHECK_THROWS_AS(matrix_from_json(json{{"rows", 2}, {"cols", 2}, {"data", {1.0}}}), ParseError);
}

TEST_CASE("atomic writes leave no temp files") {
  TempDir dir;
  write_file_atomic(dir.path / "a.txt", "one");
  write_file_atomic(dir.path / "a.txt", "two");
  CHECK(read_file(dir.path / "a.txt") == "two");
  CHECK(std::distance(fs::directory_iterator(dir.path), fs::directory_iterator{}) == 1);
}

}  // TEST_SUITE
