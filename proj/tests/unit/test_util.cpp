#include <gtest/gtest.h>

#include <filesystem>

#include "compass/error.hpp"
#include "compass/util.hpp"

namespace compass::util {
namespace {

TEST(Fnv1a64, PublishedVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Fnv1a64, UsableAtCompileTime) {
  static_assert(fnv1a64("") == 0xcbf29ce484222325ULL);
}

TEST(ToHex, PadsToWidth) {
  EXPECT_EQ(to_hex(0xabcULL), "0000000000000abc");
  EXPECT_EQ(to_hex(0xabcULL, 4), "0abc");
}

TEST(Strings, LowerAndCollapse) {
  EXPECT_EQ(ascii_lower("Goal DRIFT"), "goal drift");
  EXPECT_EQ(collapse_spaces("  a \t b\n\nc  "), "a b c");
}

TEST(Utf8, LengthAndPrefixCountCodePoints) {
  const std::string s = "h\xC3\xA9llo \xE2\x82\xAC";  // "héllo €"
  EXPECT_EQ(utf8_length(s), 7u);
  EXPECT_EQ(utf8_prefix(s, 2), "h\xC3\xA9");
  EXPECT_EQ(utf8_prefix(s, 100), s);
}

TEST(EditDistance, Classic) {
  EXPECT_EQ(edit_distance("kitten", "sitting"), 3u);
  EXPECT_EQ(edit_distance("", "abc"), 3u);
  EXPECT_EQ(edit_distance("same", "same"), 0u);
}

TEST(FormatFixed, Rounds) {
  EXPECT_EQ(format_fixed(0.8315, 3), "0.832");
  EXPECT_EQ(format_fixed(1.0, 1), "1.0");
}

TEST(Files, AtomicWriteThenRead) {
  const auto dir = std::filesystem::temp_directory_path() / "compass_util_test";
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "x.txt", "payload");
  EXPECT_EQ(read_file(dir / "x.txt"), "payload");
  std::filesystem::remove_all(dir);
  EXPECT_THROW(read_file(dir / "missing.txt"), InputError);
}

}  // namespace
}  // namespace compass::util
