#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "naclip/error.hpp"
#include "naclip/model_config.hpp"
#include "naclip/weight_store.hpp"
#include "test_support.hpp"

using namespace naclip;
using nlohmann::json;

namespace {

// Assembles an archive by hand so malformed headers can be produced.
std::vector<std::byte> raw_archive(const json& header, const std::vector<float>& blob) {
    std::string text = header.dump();
    while (text.size() % 8) text.push_back(' ');
    std::vector<std::byte> out(8 + text.size() + blob.size() * 4);
    const std::uint64_t n = text.size();
    for (int i = 0; i < 8; ++i) out[i] = std::byte((n >> (8 * i)) & 0xff);
    std::memcpy(out.data() + 8, text.data(), text.size());
    if (!blob.empty()) std::memcpy(out.data() + 8 + text.size(), blob.data(), blob.size() * 4);
    return out;
}

json entry(const std::string& name, Shape shape, std::uint64_t offset) {
    return {{"name", name}, {"dtype", "f32"}, {"shape", shape}, {"offset", offset}, {"nbytes", 4 * shape_numel(shape)}};
}

json header(json tensors) {
    return {{"format", "naclip-tensor-archive"}, {"version", 1}, {"tensors", std::move(tensors)}};
}

std::vector<NamedTensor> manifest_tensors(const WeightManifest& m) {
    std::vector<NamedTensor> out;
    for (const auto& e : m) out.push_back({e.name, Tensor(e.shape, 0.5f)});
    return out;
}

}  // namespace

TEST_CASE("hand-built archive with one tensor") {
    const TensorArchive a = decode_archive(raw_archive(header({entry("a", {2}, 0)}), {1.0f, 2.0f}));
    REQUIRE(a.contains("a"));
    CHECK(a.tensor("a") == Tensor({2}, {1.0f, 2.0f}));
    CHECK_THROWS_AS(a.tensor("b"), ValidationError);
}

TEST_CASE("malformed archives") {
    CHECK_THROWS_AS(decode_archive(raw_archive(header({entry("a", {1}, 0), entry("a", {1}, 4)}), {1, 2})), FormatError);
    CHECK_THROWS_AS(decode_archive(raw_archive(header({entry("a", {2}, 4)}), {1, 2})), CorruptionError);
    CHECK_THROWS_AS(decode_archive(raw_archive(header({entry("a", {2}, 0)}), {1})), CorruptionError);

    json wrong_dtype = header({entry("a", {1}, 0)});
    wrong_dtype["tensors"][0]["dtype"] = "f16";
    CHECK_THROWS_AS(decode_archive(raw_archive(wrong_dtype, {1})), FormatError);

    json wrong_bytes = header({entry("a", {2}, 0)});
    wrong_bytes["tensors"][0]["nbytes"] = 4;
    CHECK_THROWS_AS(decode_archive(raw_archive(wrong_bytes, {1, 2})), FormatError);

    json wrong_format = header(json::array());
    wrong_format["format"] = "safetensors";
    CHECK_THROWS_AS(decode_archive(raw_archive(wrong_format, {})), FormatError);

    json wrong_version = header(json::array());
    wrong_version["version"] = 2;
    CHECK_THROWS_AS(decode_archive(raw_archive(wrong_version, {})), FormatError);

    std::vector<std::byte> truncated(5);
    CHECK_THROWS_AS(decode_archive(truncated), FormatError);

    std::vector<std::byte> garbage = raw_archive(header(json::array()), {});
    garbage[8] = std::byte('!');
    CHECK_THROWS_AS(decode_archive(garbage), FormatError);
}

TEST_CASE("checksum detects a flipped byte") {
    std::vector<std::byte> bytes = encode_archive({{"x", Tensor({3}, {1, 2, 3})}});
    bytes.back() ^= std::byte{0x01};
    CHECK_THROWS_AS(decode_archive(bytes), CorruptionError);
    CHECK_NOTHROW(decode_archive(encode_archive({{"x", Tensor({3}, {1, 2, 3})}}, json::object(), false)));
}

TEST_CASE("round trip is bit exact") {
    std::mt19937_64 rng(11);
    std::vector<NamedTensor> in{{"visual.proj", testing::random_tensor({4, 3}, rng, -1e30f, 1e30f)},
                                {"scalar", Tensor({1}, {-0.0f})},
                                {"empty", Tensor({0, 5})},
                                {"denormal", Tensor({2}, {1e-45f, -1e-42f})}};
    const auto path = std::filesystem::temp_directory_path() / "naclip_roundtrip.naclip";
    save_archive(path, in, {{"preset", "tiny"}, {"note", "x"}});
    const TensorArchive out = load_archive(path);
    std::filesystem::remove(path);
    CHECK(out.metadata().at("preset") == "tiny");
    CHECK(out.entries().size() == in.size());
    for (const auto& t : in) {
        const Tensor back = out.tensor(t.name);
        CHECK(back.shape() == t.value.shape());
        CHECK(std::memcmp(back.data(), t.value.data(), 4 * t.value.size()) == 0);
    }
    CHECK(out.entry("scalar").offset % 4 == 0);
    CHECK_THROWS_AS(encode_archive({{"a", Tensor({1})}, {"a", Tensor({1})}}), FormatError);
    CHECK_THROWS_AS(load_archive("/nonexistent/weights.naclip"), IoError);
}

TEST_CASE("validate") {
    const ModelConfig b16 = model_preset("ViT-B/16");
    const WeightManifest vision = vision_manifest(b16.vision);

    SUBCASE("complete manifest") {
        std::vector<NamedTensor> tensors = manifest_tensors(vision);
        tensors.push_back({"extra.thing", Tensor({1})});
        const ValidationReport r = validate(decode_archive(encode_archive(tensors)), vision);
        CHECK(r.extra == std::vector<std::string>{"extra.thing"});
    }
    SUBCASE("positional embedding with the wrong row count") {
        std::vector<NamedTensor> tensors = manifest_tensors(vision);
        for (auto& t : tensors)
            if (t.name == "visual.positional_embedding") t.value = Tensor({196, 768});
        CHECK_THROWS_WITH_AS(validate(decode_archive(encode_archive(tensors)), vision),
                             doctest::Contains("visual.positional_embedding"), ValidationError);
    }
    SUBCASE("eleven blocks against a twelve-block manifest") {
        ModelConfig eleven = b16;
        eleven.vision.layers = 11;
        const TensorArchive a = decode_archive(encode_archive(manifest_tensors(vision_manifest(eleven.vision))));
        try {
            validate(a, vision);
            FAIL("expected a validation error");
        } catch (const ValidationError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("visual.blocks.11.attn.qkv.weight") != std::string::npos);
            CHECK(msg.find("visual.blocks.11.mlp.fc2.bias") != std::string::npos);
            CHECK(msg.find("visual.blocks.10.") == std::string::npos);
        }
    }
}

TEST_CASE("manifest shapes follow the config") {
    const ModelConfig b16 = model_preset("ViT-B/16");
    const WeightManifest m = model_manifest(b16);
    auto shape_of = [&](const std::string& name) {
        for (const auto& e : m)
            if (e.name == name) return e.shape;
        FAIL("missing " << name);
        return Shape{};
    };
    CHECK(shape_of("visual.positional_embedding") == Shape{197, 768});
    CHECK(shape_of("visual.patch_embed.weight") == Shape{768, 768});
    CHECK(shape_of("visual.blocks.0.attn.qkv.weight") == Shape{768, 2304});
    CHECK(shape_of("visual.blocks.11.attn.out_proj.weight") == Shape{768, 768});
    CHECK(shape_of("visual.proj") == Shape{768, 512});
    CHECK(shape_of("text.token_embedding") == Shape{49408, 512});
    CHECK(shape_of("text.positional_embedding") == Shape{77, 512});
    CHECK(shape_of("text.projection") == Shape{512, 512});
    CHECK(model_preset("ViT-L/14").vision.num_tokens() == 257);
    CHECK(model_preset("ViT-B/32").vision.num_tokens() == 50);
    CHECK_THROWS_AS(model_preset("ViT-H/14"), ConfigError);
}

TEST_CASE("random tiny archive loads") {
    const ModelConfig tiny = model_preset("tiny");
    const TensorArchive a = testing::tiny_archive();
    CHECK(validate(a, model_manifest(tiny)).extra.empty());
    const VisionWeights v = load_vision_weights(a, tiny.vision);
    CHECK(v.blocks.size() == 2);
    CHECK(v.blocks[1].attn.qkv_weight.shape() == Shape{8, 24});
    CHECK(random_model_tensors(tiny, 3)[5].value == random_model_tensors(tiny, 3)[5].value);
}
