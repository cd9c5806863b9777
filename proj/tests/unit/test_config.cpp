#include <cstdlib>
#include <filesystem>

#include "doctest.h"
#include "gazeseg/config.hpp"
#include "gazeseg/io.hpp"

using namespace gazeseg;
using nlohmann::json;

TEST_SUITE("config") {
    TEST_CASE("defaults") {
        const auto c = run_config_from_json(json::object());
        CHECK(c.samples == 200);
        CHECK(c.labeling_ratio == 0.1);
        CHECK(c.train.lambda == 0.5);
        CHECK(c.train.ema_decay == 0.99);
        CHECK(c.train.prepare.filter.v_th == 300.0);
        CHECK(c.lambdas == std::vector<double>{0.0, 0.1, 0.5, 1.0});
    }

    TEST_CASE("sections override fields") {
        const auto c = run_config_from_json(json::parse(R"({
            "world": {"w": 32, "h": 32, "num_classes": 4, "samples": 50},
            "model": {"base_channels": 8, "depth": 2},
            "train": {"lr": 0.1, "lambda": 1.0, "seed": 3},
            "mix": {"enabled": false}
        })"));
        CHECK(c.world.dims.w == 32);
        CHECK(c.train.model.num_classes == 4);
        CHECK(c.train.model.base_channels == 8);
        CHECK(c.train.lr == 0.1);
        CHECK(c.train.seed == 3);
        CHECK_FALSE(c.train.gazemix);
        // The resolved form reads back to the same config.
        CHECK(to_json(run_config_from_json(to_json(c))) == to_json(c));
    }

    TEST_CASE("unknown keys and sections are rejected with their path") {
        try {
            run_config_from_json(json::parse(R"({"train": {"lrr": 0.1}})"), "x.json");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(e.key() == "train.lrr");
            CHECK(e.path() == "x.json");
        }
        CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"optim": {}})")), ConfigError);
        CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"train": {"lr": "fast"}})")), ConfigError);
        CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"train": {"seed": -1}})")), ConfigError);
    }

    TEST_CASE("cross-field validation") {
        CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"world": {"w": 30}, "model": {"depth": 2}})")), ConfigError);
        CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"train": {"ema_decay": 1.5}})")), ConfigError);
        CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"world": {"labeling_ratio": 0}})")), ConfigError);
        CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"model": {"base_channels": 8, "mgp_reduction": 3}})")),
                        ConfigError);
    }

    TEST_CASE("missing file and bad JSON") {
        CHECK_THROWS_AS(load_run_config("/nonexistent/cfg.json"), ConfigError);
        const auto p = std::filesystem::temp_directory_path() / "gazeseg_bad.json";
        io::write_text(p, "{ nope");
        CHECK_THROWS_AS(load_run_config(p), ConfigError);
        std::filesystem::remove(p);
    }

    TEST_CASE("seed from the environment") {
        RunConfig c;
        ::setenv("GAZESEG_SEED", "42", 1);
        apply_env_overrides(c);
        CHECK(c.train.seed == 42);
        ::setenv("GAZESEG_SEED", "x1", 1);
        CHECK_THROWS_AS(apply_env_overrides(c), ConfigError);
        ::unsetenv("GAZESEG_SEED");
        c.train.seed = 7;
        apply_env_overrides(c);
        CHECK(c.train.seed == 7);
    }

    TEST_CASE("run record hashes content") {
        const auto dir = std::filesystem::temp_directory_path() / "gazeseg_runrec";
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir / "in");
        io::write_text(dir / "in" / "a.txt", "hello");
        const auto h1 = content_hash(files_under(dir / "in"));
        io::write_text(dir / "in" / "a.txt", "hellp");
        const auto h2 = content_hash(files_under(dir / "in"));
        CHECK(h1 != h2);
        CHECK(h1.size() == 16);
        write_run_record(dir / "out", "gen", RunConfig{}, files_under(dir / "in"));
        const auto rec = json::parse(io::read_text(dir / "out" / "run.json"));
        CHECK(rec.at("command") == "gen");
        CHECK(rec.at("inputs_hash") == h2);
        CHECK(rec.at("config") == to_json(RunConfig{}));
        std::filesystem::remove_all(dir);
    }
}
