#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ctvit/config_file.hpp"
#include "ctvit/data.hpp"

using namespace ctvit;
namespace fs = std::filesystem;

namespace {

const std::array<double, 3> kMean{0.5, 0.5, 0.5};
const std::array<double, 3> kStd{0.5, 0.5, 0.5};

std::string temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("ctvit_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("toy dataset determinism and balance") {
    auto a = generate_toy_dataset(70, 32, 5, kMean, kStd);
    auto b = generate_toy_dataset(70, 32, 5, kMean, kStd);
    REQUIRE(a.size() == 70);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image.data() == b[i].image.data());
        CHECK(a[i].expr_label == b[i].expr_label);
        CHECK(a[i].mask_label == b[i].mask_label);
    }
    // different seed changes pixels
    auto c = generate_toy_dataset(70, 32, 6, kMean, kStd);
    CHECK(a[0].image.data() != c[0].image.data());

    SUBCASE("class histogram of 700 samples") {
        auto big = generate_toy_dataset(700, 32, 0, kMean, kStd);
        std::vector<int64_t> expr(7, 0);
        int64_t masked = 0;
        for (const auto& s : big) {
            expr[s.expr_label]++;
            masked += s.mask_label;
        }
        for (int64_t k : expr) CHECK(k == 100);
        CHECK(masked == 350);
    }

    SUBCASE("too small to balance") {
        CHECK_THROWS_AS(generate_toy_dataset(6, 32, 0, kMean, kStd), DataError);
    }
}

TEST_CASE("band-region mean threshold decodes the mask label perfectly") {
    const int64_t side = 32;
    auto data = generate_toy_dataset(140, side, 9, kMean, kStd);
    const int64_t b0 = 9 * side / 16, b1 = 13 * side / 16;
    for (const auto& s : data) {
        double m = 0.0;
        int64_t n = 0;
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = b0; y < b1; ++y)
                for (int64_t x = 0; x < side; ++x, ++n)
                    m += s.image.data()[(c * side + y) * side + x];
        m /= n;
        // normalized pixels: band ~0.9, background ~ -0.8
        CHECK((m > 0.0) == (s.mask_label == 1));
    }
}

TEST_CASE("expression glyphs are distinct patterns") {
    // mean absolute difference between class templates is well above noise
    const int64_t side = 32;
    for (int64_t a = 0; a < 7; ++a) {
        for (int64_t b = a + 1; b < 7; ++b) {
            auto pa = toy_raw_pixels(a, side, 0);
            auto pb = toy_raw_pixels(b, side, 0);
            double diff = 0.0;
            for (size_t i = 0; i < pa.size(); ++i) diff += std::fabs(pa[i] - pb[i]);
            CHECK(diff / pa.size() > 0.02);
        }
    }
}

TEST_CASE("ppm io") {
    const std::string dir = temp_dir("ppm");

    SUBCASE("2x2 file with known bytes maps to exact normalized values") {
        // pixel bytes: (255,0,0) (0,255,0) / (0,0,255) (128,128,128)
        std::ofstream out(dir + "/known.ppm", std::ios::binary);
        out << "P6\n2 2\n255\n";
        const unsigned char bytes[] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 128, 128, 128};
        out.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
        out.close();

        std::ofstream mf(dir + "/m.tsv");
        mf << "known.ppm\t3\t1\n";
        mf.close();

        auto data = load_dataset(dir + "/m.tsv", 2, kMean, kStd, 7, 2);
        REQUIRE(data.size() == 1);
        CHECK(data[0].expr_label == 3);
        CHECK(data[0].mask_label == 1);
        const auto& img = data[0].image.data();
        // channel 0, pixel (0,0): (255/255 - 0.5)/0.5 = 1
        CHECK(img[0] == doctest::Approx(1.0));
        // channel 0, pixel (0,1): (0 - 0.5)/0.5 = -1
        CHECK(img[1] == doctest::Approx(-1.0));
        // channel 1, pixel (1,1): (128/255 - 0.5)/0.5
        CHECK(img[2 * 4 + 3] == doctest::Approx((128.0 / 255.0 - 0.5) / 0.5));
    }

    SUBCASE("round trip through write_ppm/read_ppm preserves quantized pixels") {
        std::vector<double> px(3 * 4 * 4);
        for (size_t i = 0; i < px.size(); ++i) px[i] = double(i) / px.size();
        write_ppm(dir + "/rt.ppm", 4, 4, px);
        int64_t w = 0, h = 0;
        auto back = read_ppm(dir + "/rt.ppm", w, h);
        CHECK(w == 4);
        CHECK(h == 4);
        for (size_t i = 0; i < px.size(); ++i)
            CHECK(back[i] == doctest::Approx(std::lround(px[i] * 255.0) / 255.0));
        // second write of the read-back image is byte-identical
        write_ppm(dir + "/rt2.ppm", 4, 4, back);
        CHECK(slurp(dir + "/rt.ppm") == slurp(dir + "/rt2.ppm"));
    }

    SUBCASE("non-ppm rejected") {
        std::ofstream bad(dir + "/bad.ppm", std::ios::binary);
        bad << "P5\n2 2\n255\n....";
        bad.close();
        int64_t w, h;
        CHECK_THROWS_AS(read_ppm(dir + "/bad.ppm", w, h), DataError);
    }
}

TEST_CASE("raw tensor io and grayscale replication") {
    const std::string dir = temp_dir("raw");

    SUBCASE("round trip") {
        std::vector<double> vals = {0.0, 0.25, 0.5, 0.75, 1.0, 0.125};
        write_raw_tensor(dir + "/t.bin", {2, 3}, vals);
        Shape shape;
        auto back = read_raw_tensor(dir + "/t.bin", shape);
        CHECK(shape == Shape{2, 3});
        for (size_t i = 0; i < vals.size(); ++i)
            CHECK(back[i] == doctest::Approx(vals[i]).epsilon(1e-7));
    }

    SUBCASE("rank-2 raw tensor loads as three replicated channels") {
        std::vector<double> gray(4 * 4);
        for (size_t i = 0; i < gray.size(); ++i) gray[i] = double(i) / 16.0;
        write_raw_tensor(dir + "/g.bin", {4, 4}, gray);
        std::ofstream mf(dir + "/m.tsv");
        mf << "g.bin\t0\t0\n";
        mf.close();
        auto data = load_dataset(dir + "/m.tsv", 4, kMean, kStd, 7, 2);
        REQUIRE(data.size() == 1);
        const auto& img = data[0].image.data();
        for (int64_t i = 0; i < 16; ++i) {
            CHECK(img[i] == img[16 + i]);
            CHECK(img[i] == img[32 + i]);
        }
    }

    SUBCASE("bad magic rejected") {
        std::ofstream bad(dir + "/x.bin", std::ios::binary);
        bad << "NOPE";
        bad.close();
        Shape shape;
        CHECK_THROWS_AS(read_raw_tensor(dir + "/x.bin", shape), DataError);
    }
}

TEST_CASE("manifest loading errors") {
    const std::string dir = temp_dir("manifest");

    SUBCASE("empty manifest gives an empty dataset") {
        std::ofstream mf(dir + "/empty.tsv");
        mf.close();
        CHECK(load_dataset(dir + "/empty.tsv", 8, kMean, kStd, 7, 2).empty());
    }

    SUBCASE("missing manifest") {
        CHECK_THROWS_AS(load_dataset(dir + "/nope.tsv", 8, kMean, kStd, 7, 2),
                        DataError);
    }

    SUBCASE("malformed line reported with its number") {
        write_ppm(dir + "/a.ppm", 4, 4, std::vector<double>(48, 0.5));
        std::ofstream mf(dir + "/bad.tsv");
        mf << "a.ppm\t0\t0\n";
        mf << "no-tabs-here\n";
        mf.close();
        try {
            load_dataset(dir + "/bad.tsv", 8, kMean, kStd, 7, 2);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find(":2") != std::string::npos);
        }
    }

    SUBCASE("label out of range") {
        write_ppm(dir + "/ok.ppm", 4, 4, std::vector<double>(48, 0.5));
        std::ofstream mf(dir + "/range.tsv");
        mf << "ok.ppm\t9\t0\n";
        mf.close();
        CHECK_THROWS_AS(load_dataset(dir + "/range.tsv", 4, kMean, kStd, 7, 2),
                        DataError);
    }

    SUBCASE("missing image file") {
        std::ofstream mf(dir + "/gone.tsv");
        mf << "ghost.ppm\t0\t0\n";
        mf.close();
        CHECK_THROWS_AS(load_dataset(dir + "/gone.tsv", 8, kMean, kStd, 7, 2),
                        DataError);
    }

    SUBCASE("images resized to the requested side") {
        write_ppm(dir + "/small.ppm", 4, 4, std::vector<double>(48, 0.5));
        std::ofstream mf(dir + "/resize.tsv");
        mf << "small.ppm\t1\t1\n";
        mf.close();
        auto data = load_dataset(dir + "/resize.tsv", 32, kMean, kStd, 7, 2);
        REQUIRE(data.size() == 1);
        CHECK(data[0].image.shape() == Shape{3, 32, 32});
    }
}

TEST_CASE("write_toy_dataset is byte-deterministic and loadable") {
    const std::string d1 = temp_dir("gen1");
    const std::string d2 = temp_dir("gen2");
    const std::string m1 = write_toy_dataset(14, 32, 4, d1);
    const std::string m2 = write_toy_dataset(14, 32, 4, d2);
    CHECK(slurp(m1) == slurp(m2));
    CHECK(slurp(d1 + "/toy_00003.ppm") == slurp(d2 + "/toy_00003.ppm"));

    auto data = load_dataset(m1, 32, kMean, kStd, 7, 2);
    REQUIRE(data.size() == 14);
    CHECK(data[3].expr_label == 3);
    CHECK(data[10].mask_label == 1);
}

TEST_CASE("run config round trip and errors") {
    RunConfig c;
    c.model = preset_tiny();
    c.model.seed = 77;
    c.train.seed = 77;
    c.train.batch_size = 4;
    c.train.learning_rate = 5e-3;
    c.train.optimizer = OptimizerKind::Sgd;
    c.train.train_manifest = "train.tsv";

    RunConfig back = parse_run_config(serialize_run_config(c));
    CHECK(back.model.image_side == c.model.image_side);
    CHECK(back.model.dim_small == c.model.dim_small);
    CHECK(back.model.fusion_variant_last == c.model.fusion_variant_last);
    CHECK(back.model.seed == 77);
    CHECK(back.train.seed == 77);
    CHECK(back.train.batch_size == 4);
    CHECK(back.train.learning_rate == doctest::Approx(5e-3));
    CHECK(back.train.optimizer == OptimizerKind::Sgd);
    CHECK(back.train.train_manifest == "train.tsv");

    SUBCASE("comments and blank lines accepted") {
        RunConfig parsed = parse_run_config(
            "# a comment\n\nimage_side = 32   # trailing\npatch_large=16\n"
            "patch_small = 8\nsbranch_input_side = 32\ndim_large = 32\n"
            "dim_small = 16\nheads_large = 4\nheads_small = 2\nmlp_ratio = 2\n");
        CHECK(parsed.model.image_side == 32);
        CHECK(parsed.model.patch_large == 16);
    }

    SUBCASE("unknown key rejected") {
        CHECK_THROWS_AS(parse_run_config("imag_side = 224\n"), ConfigError);
    }
    SUBCASE("duplicate key rejected") {
        CHECK_THROWS_AS(parse_run_config("mlp_ratio = 4\nmlp_ratio = 2\n"), ConfigError);
    }
    SUBCASE("bad number rejected") {
        CHECK_THROWS_AS(parse_run_config("image_side = soon\n"), ConfigError);
    }
    SUBCASE("invalid resulting config rejected") {
        CHECK_THROWS_AS(parse_run_config("image_side = 225\n"), ConfigError);
    }
}
