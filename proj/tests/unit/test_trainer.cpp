#include <filesystem>
#include <random>

#include "criteria.hpp"
#include "doctest.h"
#include "gazeseg/io.hpp"
#include "gazeseg/trainer.hpp"

using namespace gazeseg;

namespace {

Dataset tiny_dataset(int n = 16, double ratio = 0.25, std::uint64_t seed = 5) {
    WorldConfig w;
    w.dims = {16, 16};
    w.seed = seed;
    return generate_dataset(w, n, ratio);
}

TrainerConfig tiny_config() {
    TrainerConfig c;
    c.model = {1, 4, 1, 3, true, 2};
    c.batch_size = 2;
    c.iterations = 6;
    c.pretrain_iterations = 3;
    c.lr = 0.05;
    return c;
}

bool same(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto x = a[i].data(), y = b[i].data();
        if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
    }
    return true;
}

}  // namespace

TEST_SUITE("trainer") {
    TEST_CASE("toy EMA value") {
        ParamSet t, s;
        t.add("p", nd::Tensor::scalar(0.0));
        s.add("p", nd::Tensor::scalar(1.0));
        ema_update(t, s, 0.99);
        CHECK(t[0].item() == doctest::Approx(0.01).epsilon(1e-14));
    }

    TEST_CASE("EMA contract over a run") {
        const auto c = criteria::ema_contract(50);
        CHECK_MESSAGE(c.pass, c.detail);
    }

    TEST_CASE("pseudo-labels are valid and follow a confident teacher") {
        const auto ds = tiny_dataset();
        auto cfg = tiny_config();
        const auto data = prepare_training_data(ds, cfg.prepare);
        const auto batch = sample_batch(data, cfg, 1);
        auto teacher = initial_params(cfg);
        const auto in = build_step_inputs(batch, teacher, cfg);
        REQUIRE(in.targets.size() == 2u * cfg.batch_size * 256);
        for (auto t : in.targets) CHECK(t < 3);

        for (std::size_t i = 0; i < teacher.size(); ++i) {
            for (auto& v : teacher[i].data()) v = 0.0;
        }
        auto bias = teacher.at("head.b");
        bias.data()[2] = 20.0;
        const auto confident = build_step_inputs(batch, teacher, cfg);
        std::vector<const Image*> images;
        for (const auto& s : batch.unlabeled_fg) images.push_back(&s.image);
        const auto own = predict(teacher, cfg.model, images);
        for (std::size_t k = 0; k < confident.targets.size(); ++k) {
            if (confident.pse_mask[k]) CHECK(confident.targets[k] == 2);
        }
        for (const auto& m : own) {
            for (auto v : m.values()) CHECK(v == 2);
        }
    }

    TEST_CASE("one small step lowers the loss on the same batch") {
        const auto ds = tiny_dataset(20, 0.3);
        auto cfg = tiny_config();
        cfg.lr = 1e-3;
        const auto data = prepare_training_data(ds, cfg.prepare);
        int decreased = 0;
        for (int seed = 0; seed < 20; ++seed) {
            cfg.seed = static_cast<std::uint64_t>(seed);
            TrainerState st;
            st.teacher = initial_params(cfg).clone(false);
            st.student = st.teacher.clone(true);
            const auto batch = sample_batch(data, cfg, 1);
            const auto in = build_step_inputs(batch, st.teacher, cfg);
            const double before = step_loss(in, st.student, cfg).report.l_all;
            st.student.zero_grad();
            train_step(st, batch, cfg);
            const double after = step_loss(in, st.student, cfg).report.l_all;
            decreased += after < before;
        }
        CHECK(decreased >= 19);
    }

    TEST_CASE("the teacher never receives gradients") {
        const auto ds = tiny_dataset();
        auto cfg = tiny_config();
        const auto data = prepare_training_data(ds, cfg.prepare);
        TrainerState st;
        st.teacher = initial_params(cfg).clone(false);
        st.student = st.teacher.clone(true);
        for (int it = 0; it < 3; ++it) train_step(st, sample_batch(data, cfg, it), cfg);
        for (std::size_t i = 0; i < st.teacher.size(); ++i) {
            CHECK_FALSE(st.teacher[i].requires_grad());
            CHECK_FALSE(st.teacher[i].has_grad());
        }
        CHECK(nd::graph_node_count() == 0);
    }

    TEST_CASE("zero pretraining returns the initial weights") {
        const auto ds = tiny_dataset();
        auto cfg = tiny_config();
        cfg.pretrain_iterations = 0;
        const auto data = prepare_training_data(ds, cfg.prepare);
        CHECK(same(pretrain_teacher(data, cfg), initial_params(cfg)));
        cfg.pretrain_iterations = 2;
        CHECK_FALSE(same(pretrain_teacher(data, cfg), initial_params(cfg)));
        CHECK(same(pretrain_teacher(data, cfg), pretrain_teacher(data, cfg)));
    }

    TEST_CASE("pretraining halves the loss on a fully labeled world") {
        WorldConfig w;
        w.dims = {32, 32};
        const auto ds = generate_dataset(w, 64, 1.0);
        TrainerConfig cfg;
        cfg.model = {1, 8, 2, 3, true, 4};
        cfg.batch_size = 4;
        cfg.lr = 0.1;
        cfg.pretrain_iterations = 500;
        const auto data = prepare_training_data(ds, cfg.prepare);
        std::vector<double> losses;
        pretrain_teacher(data, cfg, [&](int, double loss, const ParamSet&) { losses.push_back(loss); });
        REQUIRE(losses.size() == 500);
        auto window = [&](std::size_t from) {
            double s = 0;
            for (std::size_t i = from; i < from + 20; ++i) s += losses[i];
            return s / 20;
        };
        MESSAGE("pretrain loss " << window(0) << " -> " << window(480));
        CHECK(window(480) < 0.5 * window(0));
    }

    TEST_CASE("training is deterministic and writes its artifacts") {
        const auto ds = tiny_dataset(16, 0.25, 9);
        auto cfg = tiny_config();
        cfg.val_every = 3;
        cfg.checkpoint_every = 3;
        const auto root = std::filesystem::temp_directory_path() / "gazeseg_train_det";
        std::filesystem::remove_all(root);
        TrainOptions a, b;
        a.run_dir = root / "a";
        b.run_dir = root / "b";
        const auto ra = train(ds, cfg, a);
        const auto rb = train(ds, cfg, b);
        REQUIRE(ra.log.size() == 7);
        CHECK(ra.log[0].val_dice.has_value());
        CHECK(ra.log[3].val_dice.has_value());
        CHECK_FALSE(ra.log[4].val_dice.has_value());
        CHECK(ra.log[6].val_dice.has_value());
        for (const char* f : {"train_log.jsonl", "student.ckpt", "teacher.ckpt", "student_3.ckpt", "teacher_3.ckpt"}) {
            REQUIRE(std::filesystem::exists(root / "a" / f));
            CHECK(io::read_text(root / "a" / f) == io::read_text(root / "b" / f));
        }
        std::filesystem::remove_all(root);
    }

    TEST_CASE("input errors") {
        auto cfg = tiny_config();
        auto ds = tiny_dataset();
        auto no_labels = ds;
        no_labels.labeled.clear();
        CHECK_THROWS_AS(train(no_labels, cfg), Error);
        auto few = ds;
        few.unlabeled.resize(1);
        try {
            train(few, cfg);
            FAIL("expected EmptyBatch");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptyBatch);
        }
        cfg.model.num_classes = 4;
        try {
            train(ds, cfg);
            FAIL("expected ConfigError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ConfigError);
        }
    }

    TEST_CASE("ablation switches") {
        TrainerConfig c;
        CHECK(c.effective_lambda() == 0.5);
        c.gaze_loss = false;
        CHECK(c.effective_lambda() == 0.0);
        c.gaze_loss = true;
        c.model.mgp = false;
        CHECK(c.effective_lambda() == 0.0);
    }
}
