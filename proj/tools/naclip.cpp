// naclip: command-line front end for segmentation, evaluation and archive
// utilities.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "naclip/attention_dump.hpp"
#include "naclip/dataset.hpp"
#include "naclip/error.hpp"
#include "naclip/gaussian_prior.hpp"
#include "naclip/segmenter.hpp"
#include "naclip/weight_store.hpp"

namespace fs = std::filesystem;
using namespace naclip;

namespace {

struct ModelFlags {
    std::string weights;
    std::string preset;
    std::string vocab = default_vocab_path().string();

    void add(CLI::App* app) {
        app->add_option("--weights", weights, "Tensor archive")->required()->check(CLI::ExistingFile);
        app->add_option("--preset", preset, "Model preset (default: archive metadata, else ViT-B/16)");
        app->add_option("--vocab", vocab, "BPE merges file")->check(CLI::ExistingFile);
    }
    Engine load() const {
        return load_engine(weights, preset.empty() ? std::nullopt : std::optional<std::string>(preset), vocab);
    }
};

struct SegmentFlags {
    std::string variant = "naclip";
    std::string arch = "reduced";
    double sigma = GaussianPrior::kDefaultSigma;
    bool all_blocks = false;
    bool no_pamr = false;
    std::size_t pamr_iterations = 10;
    std::vector<std::size_t> pamr_dilations{1, 2, 4, 8, 12, 24};
    std::size_t short_side = 336;
    std::size_t stride = 112;
    float temperature = kDefaultTemperature;
    std::string templates;

    void add(CLI::App* app) {
        app->add_option("--variant", variant, "Attention logits of the modified block")
            ->check(CLI::IsMember({"vanilla", "n-only", "kk", "naclip"}));
        app->add_option("--arch", arch, "Last-block architecture")->check(CLI::IsMember({"vanilla", "reduced"}));
        app->add_option("--sigma", sigma, "Gaussian prior standard deviation, in patches")->check(CLI::PositiveNumber);
        app->add_flag("--all-blocks", all_blocks, "Apply the attention variant in every block");
        app->add_flag("--no-pamr", no_pamr, "Disable PAMR refinement");
        app->add_option("--pamr-iterations", pamr_iterations, "PAMR iterations");
        app->add_option("--pamr-dilations", pamr_dilations, "PAMR dilations")->delimiter(',');
        app->add_option("--short-side", short_side, "Resize the short image side to this length");
        app->add_option("--stride", stride, "Sliding-window stride");
        app->add_option("--temperature", temperature, "Logit scale")->check(CLI::PositiveNumber);
        app->add_option("--templates", templates, "Prompt template file, one template with {} per line")
            ->check(CLI::ExistingFile);
    }

    SegmentOptions options() const {
        SegmentOptions o;
        o.encoder.variant = parse_attention_variant(variant);
        o.encoder.arch = parse_arch_mode(arch);
        o.encoder.sigma = sigma;
        o.encoder.modify_all_blocks = all_blocks;
        o.sliding.short_side = short_side;
        o.sliding.stride = stride;
        o.pamr.enabled = !no_pamr;
        o.pamr.iterations = pamr_iterations;
        o.pamr.dilations = pamr_dilations;
        o.temperature = temperature;
        return o;
    }

    std::vector<std::string> template_list() const {
        return templates.empty() ? kDefaultTemplates : read_lines(templates);
    }
};

int run_eval(const ModelFlags& model, const SegmentFlags& seg, const std::string& dataset_root,
             const std::string& classes, const std::string& out, const std::string& masks_out,
             const std::string& overlays_out, const std::string& attention_out, std::size_t limit, bool exclude_background, int ignore_index) {
    const Engine engine = model.load();
    EvalOptions opts;
    opts.dataset = DatasetSpec::from_root(dataset_root);
    if (!classes.empty()) opts.dataset.class_file = classes;
    opts.dataset.include_background = !exclude_background;
    opts.dataset.ignore_index = static_cast<std::uint16_t>(ignore_index);
    opts.templates = seg.template_list();
    opts.segment = seg.options();
    opts.limit = limit;
    if (!masks_out.empty()) opts.masks_out = masks_out;
    if (!overlays_out.empty()) opts.overlays_out = overlays_out;
    if (!attention_out.empty()) opts.attention_out = attention_out;

    const EvalResult result = evaluate(engine, opts);
    nlohmann::json config = describe(engine, opts.segment, opts.templates);
    config["dataset"] = dataset_root;
    config["ignore_index"] = ignore_index;
    config["include_background"] = !exclude_background;
    config["limit"] = limit;
    const std::string text = metrics_json(result, config).dump(2) + "\n";
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        std::ofstream f(out);
        if (!f) throw IoError("cannot write " + out);
        f << text;
    }
    std::cerr << "mIoU " << result.report.miou << " over " << result.images << " image(s)\n";
    return 0;
}

int run_segment(const ModelFlags& model, const SegmentFlags& seg, const std::string& image_path,
                const std::string& classes_path, const std::string& out, const std::string& overlay_path,
                const std::string& palette_path, const std::string& attention_out) {
    const Engine engine = model.load();
    const auto names = read_lines(classes_path);
    const ClassEmbeddingSet classes =
        embed_classes(names, seg.template_list(), engine.tokenizer, engine.text, engine.config.text);
    const RgbImage rgb = read_image(image_path);
    const SegmentResult result =
        segment(to_tensor(rgb), engine.vision, classes, seg.options(), !attention_out.empty());
    write_label_png(out, result.mask);
    if (!overlay_path.empty()) {
        const Palette palette = palette_path.empty() ? default_palette(names.size()) : read_palette(palette_path);
        write_png(overlay_path, overlay(rgb, result.mask, palette));
    }
    if (!attention_out.empty()) {
        const std::size_t g = engine.config.vision.grid_side();
        write_attention_grid(attention_out, result.attention, {g, g});
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training-free open-vocabulary semantic segmentation with neighbour-aware CLIP attention"};
    app.require_subcommand(1);

    ModelFlags model;
    SegmentFlags seg;

    auto* eval = app.add_subcommand("eval", "Segment a dataset and report mIoU as JSON");
    model.add(eval);
    seg.add(eval);
    std::string dataset, classes, out, masks_out, overlays_out, attention_out;
    std::size_t limit = 0;
    bool exclude_background = false;
    int ignore_index = kIgnoreIndex;
    eval->add_option("--dataset", dataset, "Root holding images/, masks/ and classes.txt")
        ->required()
        ->check(CLI::ExistingDirectory);
    eval->add_option("--classes", classes, "Class-name file (default <dataset>/classes.txt)")->check(CLI::ExistingFile);
    eval->add_option("--out", out, "Metrics JSON path ('-' for stdout)");
    eval->add_option("--masks-out", masks_out, "Directory for predicted index PNGs");
    eval->add_option("--overlays-out", overlays_out, "Directory for colour overlays");
    eval->add_option("--dump-attention", attention_out, "Directory for final-block attention grids");
    eval->add_option("--limit", limit, "Evaluate only the first N images");
    eval->add_flag("--exclude-background", exclude_background, "Leave a 'background' class out of the mean");
    eval->add_option("--ignore-index", ignore_index, "Ground-truth label to skip")->check(CLI::Range(0, 65535));

    auto* segc = app.add_subcommand("segment", "Segment one image");
    ModelFlags seg_model;
    SegmentFlags seg_flags;
    seg_model.add(segc);
    seg_flags.add(segc);
    std::string image, seg_classes, seg_out, overlay_out, palette, seg_attention;
    segc->add_option("--image", image, "PNG or JPEG input")->required()->check(CLI::ExistingFile);
    segc->add_option("--classes", seg_classes, "Class-name file")->required()->check(CLI::ExistingFile);
    segc->add_option("--out", seg_out, "Index PNG output")->required();
    segc->add_option("--overlay", overlay_out, "Colour overlay PNG output");
    segc->add_option("--palette", palette, "Palette file, one 'r g b' per class")->check(CLI::ExistingFile);
    segc->add_option("--dump-attention", seg_attention, "PNG of the first window's final-block attention");

    auto* val = app.add_subcommand("validate", "Check an archive against a model manifest");
    std::string val_weights, val_preset;
    val->add_option("--weights", val_weights, "Tensor archive")->required()->check(CLI::ExistingFile);
    val->add_option("--preset", val_preset, "Model preset (default: archive metadata, else ViT-B/16)");

    auto* init = app.add_subcommand("init-random", "Write a randomly initialized archive");
    std::string init_preset = "tiny", init_out;
    std::uint64_t seed = 0;
    init->add_option("--preset", init_preset, "Model preset");
    init->add_option("--seed", seed, "RNG seed");
    init->add_option("--out", init_out, "Archive path")->required();

    auto* tok = app.add_subcommand("tokenize", "Print BPE ids of a string");
    std::string text, tok_vocab = default_vocab_path().string();
    tok->add_option("text", text, "Text to encode")->required();
    tok->add_option("--vocab", tok_vocab, "BPE merges file")->check(CLI::ExistingFile);

    auto* table = app.add_subcommand("sigma-table", "Patches boosted above tau for each sigma");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*eval) return run_eval(model, seg, dataset, classes, out, masks_out, overlays_out, attention_out, limit,
                                   exclude_background, ignore_index);
        if (*segc) return run_segment(seg_model, seg_flags, image, seg_classes, seg_out, overlay_out, palette,
                                      seg_attention);
        if (*val) {
            const TensorArchive archive = load_archive(val_weights);
            std::string name = val_preset;
            if (name.empty()) name = archive.metadata().value("preset", std::string("ViT-B/16"));
            const ValidationReport report = validate(archive, model_manifest(model_preset(name)));
            for (const auto& e : report.extra) std::cout << "extra tensor: " << e << '\n';
            std::cout << "ok: " << val_weights << " satisfies the " << name << " manifest\n";
            return 0;
        }
        if (*init) {
            const ModelConfig cfg = model_preset(init_preset);
            save_archive(init_out, random_model_tensors(cfg, seed), {{"preset", cfg.name}, {"seed", seed}});
            return 0;
        }
        if (*tok) {
            const BpeTokenizer tokenizer = BpeTokenizer::from_file(tok_vocab);
            const TokenSequence seq = tokenizer.tokenize(text);
            for (std::size_t i = 0; i <= seq.eot_index; ++i) std::cout << (i ? " " : "") << seq.ids[i];
            std::cout << '\n';
            return 0;
        }
        if (*table) {
            std::printf("sigma  tau=0.7  tau=0.8  tau=0.9\n");
            for (int s = 1; s <= 10; ++s)
                std::printf("%5d  %7zu  %7zu  %7zu\n", s, count_boosted_patches(s, 0.7), count_boosted_patches(s, 0.8),
                            count_boosted_patches(s, 0.9));
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "naclip: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
