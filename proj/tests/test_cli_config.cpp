#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "config.hpp"
#include "slabuq/error.hpp"

using namespace slabuq;
using namespace slabuq::cli;

TEST(ParseKeyValues, CommentsBlanksAndWhitespace) {
  const auto kv = parse_key_values("# header\n\n field = exponential \nseed=7\r\n  # indented comment\nepsilon = 1e-4");
  ASSERT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv.at("field"), "exponential");
  EXPECT_EQ(kv.at("seed"), "7");
  EXPECT_EQ(kv.at("epsilon"), "1e-4");
}

TEST(ParseKeyValues, Errors) {
  EXPECT_THROW(parse_key_values("seed = 1\nseed = 2\n"), ParseError);
  EXPECT_THROW(parse_key_values("seed 1\n"), ParseError);
  EXPECT_THROW(parse_key_values(" = 1\n"), ParseError);
  try {
    parse_key_values("a = 1\n\nbroken\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(ParseAssignment, SplitsAtFirstEquals) {
  const auto [k, v] = parse_assignment("out_dir=a=b");
  EXPECT_EQ(k, "out_dir");
  EXPECT_EQ(v, "a=b");
  EXPECT_THROW(parse_assignment("novalue"), ParseError);
  EXPECT_THROW(parse_assignment("=3"), ParseError);
}

TEST(ApplyKeyValues, SetsFields) {
  StudyConfig c;
  apply_key_values(c, {{"field", "exponential"}, {"max_level", "3"}, {"epsilon", "2.5e-4"}, {"out_dir", "/tmp/x"}});
  EXPECT_EQ(c.field, FieldKind::exponential);
  EXPECT_EQ(c.max_level, 3u);
  EXPECT_DOUBLE_EQ(c.epsilon, 2.5e-4);
  EXPECT_EQ(c.out_dir, std::filesystem::path("/tmp/x"));
}

TEST(ApplyKeyValues, RejectsUnknownKeysAndBadValues) {
  StudyConfig c;
  EXPECT_THROW(apply_key_values(c, {{"colour", "blue"}}), ParseError);
  EXPECT_THROW(apply_key_values(c, {{"seed", "-1"}}), ParseError);
  EXPECT_THROW(apply_key_values(c, {{"seed", "12abc"}}), ParseError);
  EXPECT_THROW(apply_key_values(c, {{"epsilon", ""}}), ParseError);
  EXPECT_THROW(apply_key_values(c, {{"field", "brownian"}}), ParseError);
}

TEST(FormatConfig, RoundTripsEveryKey) {
  StudyConfig c;
  c.field = FieldKind::gaussian;
  c.sigma_a = 0.1 + 0.2;
  c.seed = 0xFFFFFFFFFFFFFFFFull;
  c.lattice_file = "/some/path with spaces/lat.txt";
  c.workers = 6;
  const std::string text = format_config(c);
  StudyConfig d;
  apply_key_values(d, parse_key_values(text));
  EXPECT_EQ(to_key_values(d), to_key_values(c));
  EXPECT_EQ(d.sigma_a, c.sigma_a);
  EXPECT_EQ(d.seed, c.seed);
  EXPECT_EQ(d.lattice_file, c.lattice_file);
}

TEST(LoadKeyValues, FileAndMissingFile) {
  const auto p = std::filesystem::temp_directory_path() / "slabuq_cli_config_test.txt";
  {
    std::ofstream out(p);
    out << "# run\nworkers = 2\n";
  }
  EXPECT_EQ(load_key_values(p).at("workers"), "2");
  std::filesystem::remove(p);
  EXPECT_THROW(load_key_values(p), IoError);
}
