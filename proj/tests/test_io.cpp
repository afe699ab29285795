#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "podiff/error.hpp"
#include "podiff/io.hpp"

using namespace podiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "podiff_unit_io";
    fs::create_directories(dir);
    return dir / name;
}

io::Checkpoint sample_checkpoint(bool with_opt) {
    MlpConfig cfg;
    cfg.latent_dim = 3;
    cfg.hidden = 5;
    cfg.blocks = 2;
    cfg.embed_dim = 4;
    cfg.timesteps = 100;
    RngStream rng(1, "ck");
    io::Checkpoint ck;
    ck.params = MlpParams(cfg);
    for (double& v : ck.params.data()) v = rng.normal();
    ck.beta_start = 1e-4;
    ck.beta_end = 0.02;
    if (with_opt) {
        AdamWState s(AdamWConfig{}, ck.params.size());
        s.step = 17;
        for (double& v : s.m) v = rng.normal();
        for (double& v : s.v) v = std::abs(rng.normal());
        ck.optimizer = s;
    }
    ck.target_standardizer = CoeffStandardizer(Vec::LinSpaced(3, -1, 1), Vec::LinSpaced(3, 0.5, 2));
    ck.cond_standardizer = CoeffStandardizer(Vec::LinSpaced(3, 0, 3), Vec::LinSpaced(3, 1, 4), 1e-6);
    ck.basis_ref = "abc123";
    return ck;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("field layout and exact roundtrip") {
    const Field2D f(3, 2, {1.0, -0.0, 1e-300, std::numeric_limits<double>::max(), 0.1, -7.25});
    const std::string b = io::encode_field(f);
    REQUIRE(b.size() == 4 + 4 + 8 + 1 + 6 * 8);
    CHECK(b.substr(0, 4) == "FLD1");
    std::uint32_t u[3];
    std::memcpy(u, b.data() + 4, 12);
    CHECK(u[0] == 2);
    CHECK(u[1] == 2);  // ny first
    CHECK(u[2] == 3);
    CHECK(b[16] == 0);
    std::size_t pos = 0;
    const Field2D g = io::decode_field(b, pos);
    CHECK(pos == b.size());
    CHECK(g.nx() == 3);
    CHECK(g.ny() == 2);
    CHECK(std::memcmp(g.values().data(), f.values().data(), 6 * sizeof(double)) == 0);

    const Field2D m(2, 2, {1, 2, 3, 4}, Mask{1, 0, 1, 1});
    const std::string mb = io::encode_field(m);
    CHECK(mb.size() == 17 + 32 + 4);
    pos = 0;
    const Field2D mg = io::decode_field(mb, pos);
    REQUIRE(mg.has_mask());
    CHECK(*mg.mask() == Mask{1, 0, 1, 1});
}

TEST_CASE("stack and file roundtrips") {
    std::vector<Field2D> fields;
    RngStream rng(2, "stack");
    for (int i = 0; i < 3; ++i) fields.emplace_back(4, 2 + i, rng.randn(4 * (2 + i)));
    const fs::path p = scratch("s.fst");
    io::write_stack(p, fields);
    const auto back = io::read_stack(p);
    REQUIRE(back.size() == 3);
    for (int i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < fields[i].size(); ++j) CHECK(back[i][j] == fields[i][j]);
    CHECK_FALSE(fs::exists(p.string() + ".tmp"));

    const fs::path q = scratch("f.fld");
    io::write_field(q, fields[1]);
    CHECK(io::read_field(q).ny() == 3);
}

TEST_CASE("corrupt and missing files") {
    const Field2D f(4, 4, 1.5);
    const std::string b = io::encode_field(f);
    std::size_t pos = 0;
    CHECK_THROWS_AS(io::decode_field(b.substr(0, b.size() - 3), pos), CorruptArtifact);
    pos = 0;
    CHECK_THROWS_AS(io::decode_field("FLD2" + b.substr(4), pos), CorruptArtifact);
    pos = 0;
    CHECK_THROWS_AS(io::decode_field(b.substr(0, 10), pos), CorruptArtifact);
    CHECK_THROWS_AS(io::decode_stack(io::encode_stack({f, f}) + "x"), CorruptArtifact);

    const fs::path p = scratch("trunc.fld");
    io::write_file_atomic(p, b.substr(0, 40));
    try {
        io::read_field(p);
        FAIL("expected an exception");
    } catch (const Error& e) {
        CHECK(e.code() == ExitCode::kCorruptArtifact);
    }
    CHECK_THROWS_AS(io::read_field(scratch("does_not_exist.fld")), MissingPrerequisite);
}

TEST_CASE("checkpoint roundtrip") {
    for (bool opt : {false, true}) {
        const io::Checkpoint ck = sample_checkpoint(opt);
        const std::string b = io::encode_checkpoint(ck);
        CHECK(b.substr(0, 4) == "PDCK");
        const io::Checkpoint back = io::decode_checkpoint(b);
        CHECK(back.params.config().hidden == 5);
        CHECK(std::equal(back.params.data().begin(), back.params.data().end(), ck.params.data().begin()));
        CHECK(back.optimizer.has_value() == opt);
        if (opt) {
            CHECK(back.optimizer->step == 17);
            CHECK(back.optimizer->v == ck.optimizer->v);
        }
        CHECK(back.cond_standardizer.floor() == 1e-6);
        CHECK(back.target_standardizer.stddev() == ck.target_standardizer.stddev());
        CHECK(back.basis_ref == "abc123");
        CHECK(io::encode_checkpoint(back) == b);

        const DiffusionModel m = io::to_model(back);
        CHECK(m.schedule.steps == 100);
        CHECK(m.latent_dim() == 3);

        for (std::size_t cut : {std::size_t{3}, std::size_t{20}, b.size() / 2, b.size() - 1})
            CHECK_THROWS_AS(io::decode_checkpoint(b.substr(0, cut)), CorruptArtifact);
        std::string bad = b;
        bad[4] = 9;  // version
        CHECK_THROWS_AS(io::decode_checkpoint(bad), CorruptArtifact);
    }
}

TEST_CASE("hashes, numbers and CSV") {
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 123456789.0}) CHECK(std::stod(io::fmt_double(v)) == v);
    CHECK(io::fmt_double(0.5) == "0.5");

    io::CsvWriter w({"a", "b"});
    w.row({"1", "x"});
    CHECK(w.text() == "a,b\n1,x\n");
    CHECK_THROWS_AS(w.row({"1"}), std::invalid_argument);
    CHECK_THROWS_AS(w.row({"1", "x,y"}), std::invalid_argument);
}

}
