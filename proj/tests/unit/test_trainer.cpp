#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "helpers.hpp"
#include "resinsort/checkpoint.hpp"
#include "resinsort/synth.hpp"
#include "resinsort/trainer.hpp"

using namespace resinsort;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    DatasetManifest manifest;
    ImageSet images;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        auto dir = rs_test::scratch_dir("trainer_data");
        Fixture out;
        out.manifest = synth_generate({3, 20, 11, 16}, dir);
        out.images = load_images(out.manifest, 32, StatsScope::train);
        return out;
    }();
    return f;
}

TrainConfig small_config(NetworkKind kind) {
    TrainConfig c = TrainConfig::defaults(kind);
    c.profile = "mini";
    c.epochs = 2;
    c.samples_per_epoch = 20;
    c.batch_size = 10;
    c.val_samples = 10;
    c.seed = 5;
    return c;
}

std::vector<double> flat_params(const Model& m) {
    std::vector<double> out;
    for (const Tensor* p : parameters_of(m)) out.insert(out.end(), p->values().begin(), p->values().end());
    return out;
}

}  // namespace

TEST_CASE("training defaults") {
    auto s = TrainConfig::defaults(NetworkKind::siamese);
    auto t = TrainConfig::defaults(NetworkKind::triplet);
    CHECK(s.epochs == 50);
    CHECK(t.epochs == 100);
    CHECK(s.batch_size == 50);
    CHECK(s.samples_per_epoch == 5000);
    CHECK(s.learning_rate == 0.001);
    CHECK(s.momentum == 0.9);
    CHECK(t.margin == 0.4);
    auto bad = small_config(NetworkKind::triplet);
    bad.samples_per_epoch = 25;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = small_config(NetworkKind::triplet);
    bad.momentum = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("zero learning rate leaves the initial weights untouched") {
    auto c = small_config(NetworkKind::triplet);
    c.learning_rate = 0.0;
    auto r = train(c, fixture().manifest, fixture().images);
    CHECK(flat_params(r.model) == flat_params(initialize_model(c)));
    CHECK(r.history.epochs.size() == 2);
}

TEST_CASE("training is deterministic and thread-count independent") {
    for (auto kind : {NetworkKind::triplet, NetworkKind::siamese}) {
        auto c = small_config(kind);
        setenv("RESINSORT_THREADS", "1", 1);
        auto a = train(c, fixture().manifest, fixture().images);
        setenv("RESINSORT_THREADS", "3", 1);
        auto b = train(c, fixture().manifest, fixture().images);
        unsetenv("RESINSORT_THREADS");
        CHECK(a.history == b.history);
        CHECK(flat_params(a.model) == flat_params(b.model));
        CHECK(a.optimizer_steps == c.epochs * (c.samples_per_epoch / c.batch_size));
        for (const auto& e : a.history.epochs) {
            CHECK(std::isfinite(e.train_loss));
            CHECK(std::isfinite(e.val_loss));
        }
        CHECK(flat_params(a.model) != flat_params(initialize_model(c)));
    }
}

TEST_CASE("held-out class never reaches the training pool") {
    const auto& m = fixture().manifest;
    auto pool = training_pool(m, Split::train, 2);
    for (auto i : pool) CHECK(m.records[i].class_id != 2);
    CHECK(pool.size() == m.class_counts(Split::train)[0] + m.class_counts(Split::train)[1]);
}

TEST_CASE("loss history csv") {
    LossHistory h{{{1, 0.5, 0.25}, {2, 0.125, 0.0625}}};
    CHECK(h.to_csv() == "epoch,train_loss,val_loss\n1,0.5,0.25\n2,0.125,0.0625\n");
}

TEST_CASE("checkpoint round trip is byte exact") {
    auto dir = rs_test::scratch_dir("ckpt");
    for (auto kind : {NetworkKind::triplet, NetworkKind::siamese}) {
        auto c = small_config(kind);
        Model m = initialize_model(c);
        ChannelStats stats{{0.1, 0.2, 0.3}, {0.01, 0.02, 0.03}};
        save_checkpoint(m, stats, dir / "a.rsrt");
        auto back = load_checkpoint(dir / "a.rsrt");
        save_checkpoint(back.model, back.stats, dir / "b.rsrt");
        CHECK(serialize_checkpoint(m, stats) == serialize_checkpoint(back.model, back.stats));
        CHECK(back.stats == stats);
        CHECK(kind_of(back.model) == kind);
        const auto& x = fixture().images.images.front();
        CHECK(embed(back.model, x) == embed(m, x));
    }
}

TEST_CASE("checkpoint corruption is reported") {
    auto c = small_config(NetworkKind::triplet);
    auto bytes = serialize_checkpoint(initialize_model(c), ChannelStats{});
    auto cut = bytes;
    cut.resize(bytes.size() - 3);
    CHECK_THROWS_WITH_AS(parse_checkpoint(cut), doctest::Contains("truncated payload"), CheckpointError);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_WITH_AS(parse_checkpoint(magic), doctest::Contains("magic"), CheckpointError);
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(parse_checkpoint(extra), CheckpointError);
    CHECK_THROWS_AS(parse_checkpoint({}), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/path.rsrt"), DataError);
}
