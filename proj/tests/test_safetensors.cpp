#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <anchorscope/safetensors.hpp>

#include "helpers.hpp"

using anchorscope::Mat;
using anchorscope::SafeTensors;
using anchorscope::SafeTensorsStream;
using anchorscope::SafeTensorsWriter;
using anchorscope::Vec;

namespace {

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("writer and reader round trip exactly", "[safetensors]") {
    Mat m(3, 4);
    for (int i = 0; i < 12; ++i) m.data()[i] = static_cast<float>(i) * 0.25f - 1.0f;
    Vec v(5);
    v << 1.5f, -2.0f, 0.0f, 3.25f, -0.125f;

    const auto path = temp_file("anchorscope_st_roundtrip.safetensors");
    SafeTensorsWriter wr;
    wr.add("m", m);
    wr.add("v", v);
    wr.write(path);

    const auto st = SafeTensors::load(path);
    REQUIRE(st.contains("m"));
    REQUIRE(st.contains("v"));
    REQUIRE_FALSE(st.contains("missing"));
    REQUIRE(st.matrix("m") == m);
    REQUIRE(st.vector("v") == v);

    auto stream = SafeTensorsStream::open(path);
    REQUIRE(stream.read_matrix("m") == m);
    REQUIRE(stream.read_vector("v") == v);
    std::remove(path.c_str());
}

TEST_CASE("reader names missing tensors and bad ranks", "[safetensors]") {
    const auto path = temp_file("anchorscope_st_errors.safetensors");
    SafeTensorsWriter wr;
    Vec v(2);
    v << 1.0f, 2.0f;
    wr.add("only_vec", v);
    wr.write(path);

    const auto st = SafeTensors::load(path);
    REQUIRE_THROWS_WITH(st.matrix("absent"), Catch::Matchers::ContainsSubstring("absent"));
    REQUIRE_THROWS_WITH(st.matrix("only_vec"), Catch::Matchers::ContainsSubstring("rank"));
    std::remove(path.c_str());
}

TEST_CASE("reader rejects non-F32 dtypes by name", "[safetensors]") {
    const auto path = temp_file("anchorscope_st_dtype.safetensors");
    {
        const std::string header =
            R"({"t":{"dtype":"I64","shape":[1],"data_offsets":[0,8]}})";
        std::ofstream f(path, std::ios::binary);
        const std::uint64_t n = header.size();
        f.write(reinterpret_cast<const char*>(&n), 8);
        f.write(header.data(), static_cast<std::streamsize>(header.size()));
        const char zeros[8] = {};
        f.write(zeros, 8);
    }
    const auto st = SafeTensors::load(path);
    REQUIRE_THROWS_WITH(st.vector("t"), Catch::Matchers::ContainsSubstring("I64"));
    std::remove(path.c_str());
}

TEST_CASE("reader rejects truncated files", "[safetensors]") {
    const auto path = temp_file("anchorscope_st_trunc.safetensors");
    {
        std::ofstream f(path, std::ios::binary);
        const char bytes[4] = {1, 2, 3, 4};
        f.write(bytes, 4);
    }
    REQUIRE_THROWS_AS(SafeTensors::load(path), anchorscope::Error);
    std::remove(path.c_str());
}

TEST_CASE("reader skips __metadata__", "[safetensors]") {
    const auto path = temp_file("anchorscope_st_meta.safetensors");
    {
        const std::string header =
            R"({"__metadata__":{"format":"pt"},"x":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})";
        std::ofstream f(path, std::ios::binary);
        const std::uint64_t n = header.size();
        f.write(reinterpret_cast<const char*>(&n), 8);
        f.write(header.data(), static_cast<std::streamsize>(header.size()));
        const float vals[2] = {7.0f, 8.0f};
        f.write(reinterpret_cast<const char*>(vals), 8);
    }
    const auto st = SafeTensors::load(path);
    REQUIRE(st.names().size() == 1);
    REQUIRE(st.vector("x")[1] == 8.0f);
    std::remove(path.c_str());
}

TEST_CASE("pretrained checkpoint spot values survive loading", "[safetensors][model]") {
    REQUIRE_MODEL("gpt2");
    const auto& w = testutil::gpt2();
    // values read straight out of the checkpoint file with an independent parser
    REQUIRE(w.wte(0, 0) == Catch::Approx(-0.11010301113128662).epsilon(1e-6));
    REQUIRE(w.wte(50256, 767) == Catch::Approx(0.12067824602127075).epsilon(1e-6));
    REQUIRE(w.wpe(1023, 0) == Catch::Approx(0.00026609693304635584).epsilon(1e-6));
    REQUIRE(w.blocks[0].w_qkv(0, 0) == Catch::Approx(-0.4738484025001526).epsilon(1e-6));
    REQUIRE(w.blocks[11].w_mlp_out(3071, 767) == Catch::Approx(0.009226187132298946).epsilon(1e-6));
    REQUIRE(w.lnf_g[100] == Catch::Approx(1.230474591255188).epsilon(1e-6));
}
