#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "e2v/config.hpp"

using namespace e2v;
using cfg::RunConfig;

TEST_CASE("defaults match the declared table") {
    RunConfig rc;
    CHECK(rc.get("seed") == "7");
    CHECK(rc.get_int("sequences") == 20);
    CHECK(rc.get_int("resolution") == 64);
    CHECK(rc.get_double("lambda") == 1.8);
    CHECK(rc.get_double("alpha") == 50.0);
    CHECK(rc.get_int("seq_len") == 16);
    CHECK(rc.get_int("epochs") == 8);
    CHECK(rc.get_int("n_masks") == 10);
    CHECK(rc.get_bool("use_cfhm"));
    CHECK(rc.get("ablation") == "full");
    CHECK(rc.get_double("tolerance_ms") == 1.0);
}

TEST_CASE("unknown keys are a hard error") {
    RunConfig rc;
    CHECK_THROWS_AS(rc.set("lamda", "1.0"), UsageError);
    CHECK_THROWS_AS(rc.get("bogus_key"), UsageError);
}

TEST_CASE("config file parsing with comments and overrides") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "e2v_cfg_test.cfg").string();
    {
        std::ofstream os(path);
        os << "# comment line\n";
        os << "seed = 123\n";
        os << "lambda=2.0  # trailing comment\n";
        os << "\n";
        os << "ablation = fuse_add\n";
    }
    RunConfig rc;
    rc.load_file(path);
    CHECK(rc.get_u64("seed") == 123);
    CHECK(rc.get_double("lambda") == 2.0);
    CHECK(rc.get("ablation") == "fuse_add");
    CHECK(rc.was_set("seed"));
    CHECK_FALSE(rc.was_set("alpha"));

    // explicit set (CLI flag) overrides the file
    rc.set("lambda", "0.5");
    CHECK(rc.get_double("lambda") == 0.5);

    // bad file content
    {
        std::ofstream os(path);
        os << "this is not a key value pair\n";
    }
    RunConfig rc2;
    CHECK_THROWS_AS(rc2.load_file(path), UsageError);

    {
        std::ofstream os(path);
        os << "unknown_key=1\n";
    }
    RunConfig rc3;
    CHECK_THROWS_AS(rc3.load_file(path), UsageError);
}

TEST_CASE("E2V_SEED env applies only when seed is unset") {
    setenv("E2V_SEED", "5555", 1);
    RunConfig rc;
    rc.apply_env_fallbacks();
    CHECK(rc.get_u64("seed") == 5555);

    RunConfig rc2;
    rc2.set("seed", "42");
    rc2.apply_env_fallbacks();
    CHECK(rc2.get_u64("seed") == 42);
    unsetenv("E2V_SEED");
}

TEST_CASE("list parsing") {
    RunConfig rc;
    rc.set("seeds", "1,2,3");
    auto seeds = rc.get_string_list("seeds");
    REQUIRE(seeds.size() == 3);
    CHECK(seeds[2] == "3");

    rc.set("grid", "");
    CHECK(rc.get_string_list("grid").empty());

    rc.set("seeds", "0.5,1.0,1.5");
    auto values = rc.get_double_list("seeds");
    REQUIRE(values.size() == 3);
    CHECK(values[1] == 1.0);
}

TEST_CASE("resolved.cfg round trips through load_file") {
    const std::string dir =
        (std::filesystem::temp_directory_path() / "e2v_resolved_test").string();
    std::filesystem::create_directories(dir);
    RunConfig rc;
    rc.set("seed", "31415");
    rc.set("ablation", "fuse_mean");
    rc.write_resolved(dir);

    RunConfig back;
    back.load_file(dir + "/resolved.cfg");
    CHECK(back.get_u64("seed") == 31415);
    CHECK(back.get("ablation") == "fuse_mean");
    CHECK(back.get_double("lambda") == 1.8);
}

TEST_CASE("numeric parse failures raise usage errors") {
    RunConfig rc;
    rc.set("epochs", "five");
    CHECK_THROWS_AS(rc.get_int("epochs"), UsageError);
    rc.set("lambda", "abc");
    CHECK_THROWS_AS(rc.get_double("lambda"), UsageError);
    rc.set("use_cfhm", "maybe");
    CHECK_THROWS_AS(rc.get_bool("use_cfhm"), UsageError);
}
