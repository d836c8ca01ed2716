#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bdml/io.hpp"
#include "test_util.hpp"

#include <cstdio>
#include <fstream>

using namespace bdml;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content) : path(name) {
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("two-line CSV parses labels and features") {
    TempFile f("io_test_basic.csv", "0,1.0,2.0\n1,3.0,4.0\n");
    LabeledDataset d = load_dataset(f.path, DataFormat::csv);
    CHECK(d.size() == 2);
    CHECK(d.d == 2);
    CHECK(d.labels == std::vector<int>{0, 1});
    CHECK(d.points[0](0) == doctest::Approx(1.0));
    CHECK(d.points[1](1) == doctest::Approx(4.0));
    CHECK(d.gamma == doctest::Approx(5.0));  // ||(3,4)|| = 5
}

TEST_CASE("svmlight lines densify to the largest index seen") {
    TempFile f("io_test_svm.light", "1 2:5.0\n-1 1:1.0 3:2.0\n");
    LabeledDataset d = load_dataset(f.path, DataFormat::svmlight);
    CHECK(d.d == 3);
    CHECK(d.points[0](0) == doctest::Approx(0.0));
    CHECK(d.points[0](1) == doctest::Approx(5.0));
    CHECK(d.points[0](2) == doctest::Approx(0.0));
    CHECK(d.points[1](0) == doctest::Approx(1.0));
    CHECK(d.points[1](2) == doctest::Approx(2.0));
    CHECK(d.labels == std::vector<int>{1, -1});
}

TEST_CASE("parse errors carry the offending line number") {
    TempFile ragged("io_test_ragged.csv", "0,1.0,2.0\n1,3.0\n");
    try {
        load_dataset(ragged.path, DataFormat::csv);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
    }

    TempFile bad("io_test_bad.csv", "0,1.0,zzz\n");
    try {
        load_dataset(bad.path, DataFormat::csv);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line == 1);
    }

    TempFile empty("io_test_empty.csv", "");
    CHECK_THROWS_AS(load_dataset(empty.path, DataFormat::csv), ParseError);
}

TEST_CASE("save then load reproduces points bit-exactly") {
    auto g = testutil::rng(81);
    LabeledDataset d = testutil::blobs(10, 3.0, 82);
    const std::string path = "io_test_roundtrip.csv";
    save_dataset_csv(d, path);
    LabeledDataset back = load_dataset(path, DataFormat::csv);
    REQUIRE(back.size() == d.size());
    for (int i = 0; i < d.size(); ++i) {
        CHECK(back.labels[i] == d.labels[i]);
        for (int j = 0; j < d.d; ++j) CHECK(back.points[i](j) == d.points[i](j));
    }
    std::remove(path.c_str());
}

TEST_CASE("missing file raises a readable error") {
    CHECK_THROWS(load_dataset("does_not_exist_anywhere.csv", DataFormat::csv));
}
