#include <doctest.h>

#include <carenet/error.hpp>
#include <carenet/labels.hpp>
#include <carenet/rng.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace carenet;
namespace fs = std::filesystem;

TEST_CASE("canonical schemas match the label taxonomy") {
    CHECK(TaskSchema::type().kind == TaskKind::Binary);
    CHECK(TaskSchema::type().output_dim == 1);
    CHECK(TaskSchema::subtype().kind == TaskKind::OneHot);
    CHECK(TaskSchema::subtype().output_dim == 4);
    CHECK(TaskSchema::er().kind == TaskKind::Ordinal);
    CHECK(TaskSchema::er().classes == std::vector<std::string>{"-", "+", "++", "+++"});
    CHECK(TaskSchema::her2().kind == TaskKind::Binary);
    CHECK(TaskSchema::ki67().kind == TaskKind::Regression);
    CHECK(TaskSchema::ki67().range_min == 5.0);
    CHECK(TaskSchema::ki67().range_max == 30.0);
    CHECK_THROWS_AS(TaskSchema::for_task("histology"), Error);
}

TEST_CASE("encode: binary, one-hot, ordinal, regression") {
    CHECK(encode_label(TaskSchema::type(), "AT") == std::vector<double>{0.0});
    CHECK(encode_label(TaskSchema::type(), "CA") == std::vector<double>{1.0});
    CHECK(encode_label(TaskSchema::subtype(), "HER2") == std::vector<double>{0, 0, 1, 0});
    CHECK(encode_label(TaskSchema::er(), "+") == std::vector<double>{1, 1, 0, 0});
    CHECK(encode_label(TaskSchema::er(), "-") == std::vector<double>{1, 0, 0, 0});
    CHECK(encode_label(TaskSchema::er(), "+++") == std::vector<double>{1, 1, 1, 1});
    // Ki67 10% over (5, 30) -> (10-5)/25
    CHECK(encode_label(TaskSchema::ki67(), 10.0)[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK_THROWS_WITH_AS(encode_label(TaskSchema::subtype(), "XX"),
                         doctest::Contains("schema error"), Error);
    CHECK_THROWS_WITH_AS(encode_label(TaskSchema::ki67(), 55.0), doctest::Contains("range error"),
                         Error);
}

TEST_CASE("decode rules") {
    SUBCASE("ordinal takes the highest index above threshold") {
        const auto d = decode_output(TaskSchema::er(), {0.9, 0.8, 0.3, 0.1});
        CHECK(d.class_index == 1);
        CHECK(d.class_name == "+");
    }
    SUBCASE("ordinal all-below decodes to the lowest level") {
        CHECK(decode_output(TaskSchema::er(), {0.4, 0.3, 0.2, 0.1}).class_index == 0);
    }
    SUBCASE("binary boundary 0.5 is positive") {
        CHECK(decode_output(TaskSchema::type(), {0.5}).class_name == "CA");
        CHECK(decode_output(TaskSchema::type(), {0.4999}).class_name == "AT");
    }
    SUBCASE("one-hot argmax with ties to the lowest index") {
        CHECK(decode_output(TaskSchema::subtype(), {0.3, 0.3, 0.2, 0.2}).class_index == 0);
        CHECK(decode_output(TaskSchema::subtype(), {0.1, 0.2, 0.5, 0.2}).class_index == 2);
    }
    SUBCASE("regression inverse affine") {
        CHECK(decode_output(TaskSchema::ki67(), {0.84}).percent ==
              doctest::Approx(26.0).epsilon(1e-12));
    }
    SUBCASE("non-finite raw is a decode error") {
        CHECK_THROWS_WITH_AS(decode_output(TaskSchema::type(), {std::nan("")}),
                             doctest::Contains("decode error"), Error);
    }
}

TEST_CASE("encode-decode identity over every class of every schema") {
    for (const TaskSchema& schema :
         {TaskSchema::type(), TaskSchema::subtype(), TaskSchema::er(), TaskSchema::pr(),
          TaskSchema::her2()}) {
        for (std::size_t c = 0; c < schema.classes.size(); ++c) {
            const auto target = encode_label(schema, schema.classes[c]);
            const auto decoded = decode_output(schema, target);
            CHECK(decoded.class_index == static_cast<int>(c));
            CHECK(decoded.class_name == schema.classes[c]);
        }
    }
}

TEST_CASE("ordinal targets are monotone and decode is monotone") {
    const TaskSchema schema = TaskSchema::er();
    for (std::size_t c = 0; c < schema.classes.size(); ++c) {
        const auto t = encode_label(schema, schema.classes[c]);
        for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] <= t[i - 1]);
    }
    // Raising any output never lowers the decoded level.
    Rng rng(1234);
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<double> raw(4);
        for (auto& v : raw) v = rng.uniform();
        const int before = decode_output(schema, raw).class_index;
        std::vector<double> boosted = raw;
        const std::size_t which = rng.below(4);
        boosted[which] = std::min(1.0, boosted[which] + rng.uniform());
        const int after = decode_output(schema, boosted).class_index;
        CHECK(after >= before);
    }
}

TEST_CASE("ki67 scaling round-trips") {
    const TaskSchema schema = TaskSchema::ki67();
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform(5.0, 30.0);
        const double back = unscale_percent(schema, encode_label(schema, p)[0]);
        CHECK(std::abs(back - p) <= 1e-12);
    }
}

TEST_CASE("class weights") {
    SUBCASE("table counts {8,8,7,7}") {
        const auto w = class_weights({8, 8, 7, 7});
        CHECK(w[0] == doctest::Approx(0.9375).epsilon(1e-12));
        CHECK(w[1] == doctest::Approx(0.9375).epsilon(1e-12));
        CHECK(w[2] == doctest::Approx(30.0 / 28.0).epsilon(1e-12));
        CHECK(w[3] == doctest::Approx(30.0 / 28.0).epsilon(1e-12));
    }
    SUBCASE("balanced counts give unit weights") {
        for (double w : class_weights({5, 5, 5})) CHECK(w == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("9-1 binary") {
        const auto w = class_weights({9, 1});
        CHECK(w[0] == doctest::Approx(10.0 / 18.0).epsilon(1e-12));
        CHECK(w[1] == doctest::Approx(5.0).epsilon(1e-12));
    }
    SUBCASE("weighted count identity") {
        Rng rng(17);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<long> counts;
            long total = 0;
            const int k = 2 + static_cast<int>(rng.below(6));
            for (int c = 0; c < k; ++c) {
                counts.push_back(1 + static_cast<long>(rng.below(40)));
                total += counts.back();
            }
            const auto w = class_weights(counts);
            double sum = 0.0;
            for (std::size_t c = 0; c < w.size(); ++c)
                sum += w[c] * static_cast<double>(counts[static_cast<std::size_t>(c)]);
            CHECK(std::abs(sum - static_cast<double>(total)) <= 1e-9 * static_cast<double>(total));
        }
    }
    SUBCASE("zero count is an input error") { CHECK_THROWS_AS(class_weights({3, 0}), Error); }
}

TEST_CASE("label manifest load rejects HER2 borderline levels with a warning") {
    const fs::path dir = fs::temp_directory_path() / "carenet_test_labels";
    fs::create_directories(dir);
    const fs::path path = dir / "labels.csv";
    {
        std::ofstream out(path);
        out << "sample_id,patient_id,type,subtype,er,pr,her2,ki67_percent\n";
        out << "S0,P0,CA,LA,+,+,0,5\n";
        out << "S1,P1,CA,LB,++,+,1+,15\n";
        out << "S2,P2,CA,HER2,-,-,3+,30\n";
    }
    const LabelManifest manifest = load_label_manifest(path);
    REQUIRE(manifest.records.size() == 3);
    CHECK(manifest.records[0].her2.value() == "0");
    CHECK_FALSE(manifest.records[1].her2.has_value());
    CHECK(manifest.records[2].her2.value() == "3+");
    REQUIRE(manifest.warnings.size() == 1);
    CHECK(manifest.warnings[0].find("S1") != std::string::npos);

    // round trip keeps the rejected level blank
    save_label_manifest(manifest, dir / "labels_out.csv");
    const LabelManifest back = load_label_manifest(dir / "labels_out.csv");
    CHECK_FALSE(back.records[1].her2.has_value());
    CHECK(back.records[2].ki67_percent == 30.0);
}

TEST_CASE("class scores feed vote tie-breaking") {
    const auto binary = class_scores(TaskSchema::type(), {0.8});
    CHECK(binary[0] == doctest::Approx(0.2));
    CHECK(binary[1] == doctest::Approx(0.8));

    const auto ordinal = class_scores(TaskSchema::er(), {0.95, 0.7, 0.4, 0.1});
    CHECK(ordinal[0] == doctest::Approx(1.0 - 0.7));
    CHECK(ordinal[1] == doctest::Approx(0.7 - 0.4));
    CHECK(ordinal[3] == doctest::Approx(0.1));
}
