#include <doctest.h>

#include "mcpforge/util.hpp"

using namespace mcpforge;

TEST_CASE("sha256 matches the published test vector") {
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("normalize_path resolves dot segments lexically") {
    CHECK(normalize_path("a/b/../c") == "a/c");
    CHECK(normalize_path("a/../../b") == "../b");
    CHECK(normalize_path("/x/./y//z/..") == "/x/y");
    CHECK(normalize_path("../../etc/passwd") == "../../etc/passwd");
    CHECK(normalize_path("./") == ".");
}

TEST_CASE("path_under is inclusive at the root boundary") {
    CHECK(path_under("/ws", "/ws"));
    CHECK(path_under("/ws/out.txt", "/ws"));
    CHECK(path_under("/ws/a/../b", "/ws"));
    CHECK_FALSE(path_under("/ws2/out.txt", "/ws"));
    CHECK_FALSE(path_under("/ws/../etc", "/ws"));
}

TEST_CASE("contains_word respects identifier boundaries") {
    CHECK(contains_word("run(cmd + target)", "target"));
    CHECK_FALSE(contains_word("retarget(all)", "target"));
    CHECK(contains_word("target=3", "target"));
}

TEST_CASE("split_lines and join round trip") {
    auto lines = split_lines("a\nb\r\n\nc");
    REQUIRE(lines.size() == 4);
    CHECK(lines[1] == "b");
    CHECK(lines[2] == "");
    CHECK(join(lines, "|") == "a|b||c");
}
