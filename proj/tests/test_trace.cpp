#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "visdep/rng.hpp"
#include "visdep/trace.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace visdep;

namespace {

TokenTrace random_trace(Rng& rng, int i) {
  TokenTrace t;
  t.sample_id = "s" + std::to_string(i);
  const auto n = static_cast<std::size_t>(rng.between(1, 20));
  for (std::size_t k = 0; k < n; ++k) {
    t.tokens.push_back(static_cast<TokenId>(rng.below(50000)));
    t.surfaces.push_back("w" + std::to_string(rng.below(100)));
    t.p_clean.push_back(rng.uniform());
    t.p_noisy.push_back(rng.uniform());
  }
  if (rng.bernoulli(0.5)) t.eos_index = n - 1;
  return t;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST(Trace, RoundTripRandom) {
  TempDir dir;
  Rng rng(11);
  TraceFile f;
  f.header.noise_step = 500;
  f.header.generator = "unit";
  for (int i = 0; i < 100; ++i) f.traces.push_back(random_trace(rng, i));
  write_traces(f, dir / "t.jsonl");
  EXPECT_EQ(read_traces(dir / "t.jsonl"), f);
}

TEST(Trace, Utf8SurfacesPreserved) {
  TempDir dir;
  TraceFile f;
  f.traces.push_back({"u", {1, 2, 3}, {"\xE2\x96\x81" "caf\xC3\xA9", "\xE6\x97\xA5\xE6\x9C\xAC", "\xF0\x9F\x90\xB6"},
                      {0.5, 0.25, 0.125}, {0.5, 0.5, 0.5}, 2});
  write_traces(f, dir / "t.jsonl");
  const auto back = read_traces(dir / "t.jsonl");
  ASSERT_EQ(back.traces.size(), 1u);
  EXPECT_EQ(back.traces[0].surfaces, f.traces[0].surfaces);
}

TEST(Trace, SingleRecord) {
  TempDir dir;
  write_text(dir / "t.jsonl",
             "{\"format\":\"visdep-trace\",\"version\":1,\"noise_step\":900}\n"
             "{\"sample_id\":\"a\",\"tokens\":[4,5,1],\"surfaces\":[\"a\",\"dog\",\"</s>\"],"
             "\"p_clean\":[0.9,0.5,0.1],\"p_noisy\":[0.1,0.5,0.9],\"eos_index\":2}\n");
  const auto f = read_traces(dir / "t.jsonl");
  ASSERT_EQ(f.traces.size(), 1u);
  EXPECT_EQ(f.traces[0].size(), 3u);
  EXPECT_EQ(f.header.noise_step, 900);
  EXPECT_EQ(f.traces[0].eos_index, std::optional<std::size_t>(2));
}

TEST(Trace, OutOfRangeProbabilityNamesField) {
  TempDir dir;
  write_text(dir / "t.jsonl",
             "{\"format\":\"visdep-trace\",\"version\":1,\"noise_step\":900}\n"
             "{\"sample_id\":\"bad\",\"tokens\":[4],\"surfaces\":[\"a\"],\"p_clean\":[1.2],\"p_noisy\":[0.1],"
             "\"eos_index\":null}\n");
  try {
    read_traces(dir / "t.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("p_clean"), std::string::npos) << msg;
    EXPECT_NE(msg.find("bad"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
  }
}

TEST(Trace, EmptyFileIsEmptyTraceFile) {
  TempDir dir;
  write_text(dir / "t.jsonl", "");
  EXPECT_TRUE(read_traces(dir / "t.jsonl").traces.empty());
}

TEST(Trace, HeaderOnlyFile) {
  TempDir dir;
  write_text(dir / "t.jsonl", "{\"format\":\"visdep-trace\",\"version\":1,\"noise_step\":200}\n");
  const auto f = read_traces(dir / "t.jsonl");
  EXPECT_TRUE(f.traces.empty());
  EXPECT_EQ(f.header.noise_step, 200);
}

TEST(Trace, MissingHeaderRejected) {
  TempDir dir;
  write_text(dir / "t.jsonl",
             "{\"sample_id\":\"a\",\"tokens\":[4],\"surfaces\":[\"a\"],\"p_clean\":[0.1],\"p_noisy\":[0.1]}\n");
  EXPECT_THROW(read_traces(dir / "t.jsonl"), DataError);
}

TEST(Trace, MalformedJsonReportsLine) {
  TempDir dir;
  write_text(dir / "t.jsonl", "{\"format\":\"visdep-trace\",\"version\":1,\"noise_step\":900}\n\n{oops\n");
  try {
    read_traces(dir / "t.jsonl");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
}

TEST(Trace, InvariantViolations) {
  TokenTrace t{"x", {1, 2}, {"a", "b"}, {0.1, 0.2}, {0.3, 0.4}, std::nullopt};
  EXPECT_NO_THROW(validate(t));
  auto bad = t;
  bad.p_noisy.pop_back();
  EXPECT_THROW(validate(bad), DataError);
  bad = t;
  bad.eos_index = 0;
  EXPECT_THROW(validate(bad), DataError);
  bad = t;
  bad.tokens[0] = -1;
  EXPECT_THROW(validate(bad), DataError);
  bad = t;
  bad.p_clean[1] = std::nan("");
  EXPECT_THROW(validate(bad), DataError);
  bad = {"e", {}, {}, {}, {}, std::nullopt};
  EXPECT_THROW(validate(bad), DataError);
}

TEST(Trace, DuplicateIdsRejected) {
  TempDir dir;
  TraceFile f;
  f.traces.push_back({"a", {1}, {"x"}, {0.5}, {0.5}, std::nullopt});
  f.traces.push_back({"a", {2}, {"y"}, {0.5}, {0.5}, std::nullopt});
  EXPECT_THROW(write_traces(f, dir / "t.jsonl"), DataError);
  write_text(dir / "t.jsonl",
             "{\"format\":\"visdep-trace\",\"version\":1,\"noise_step\":900}\n"
             "{\"sample_id\":\"a\",\"tokens\":[1],\"surfaces\":[\"x\"],\"p_clean\":[0.5],\"p_noisy\":[0.5]}\n"
             "{\"sample_id\":\"a\",\"tokens\":[1],\"surfaces\":[\"x\"],\"p_clean\":[0.5],\"p_noisy\":[0.5]}\n");
  EXPECT_THROW(read_traces(dir / "t.jsonl"), DataError);
}

TEST(Trace, UnwritablePath) {
  TraceFile f;
  EXPECT_THROW(write_traces(f, "/nonexistent-dir/x/t.jsonl"), DataError);
}

TEST(Trace, FullPrecisionNumbers) {
  TempDir dir;
  TraceFile f;
  f.traces.push_back({"p", {1}, {"x"}, {0.1 + 0.2}, {1.0 / 3.0}, std::nullopt});
  write_traces(f, dir / "t.jsonl");
  const auto back = read_traces(dir / "t.jsonl");
  EXPECT_EQ(back.traces[0].p_clean[0], 0.1 + 0.2);
  EXPECT_EQ(back.traces[0].p_noisy[0], 1.0 / 3.0);
}
