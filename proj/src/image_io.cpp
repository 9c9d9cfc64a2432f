#include "naclip/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <csetjmp>
#include <fstream>
#include <memory>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "naclip/error.hpp"

namespace naclip {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

struct DecodedPng {
    std::size_t width = 0, height = 0;
    int color_type = 0, bit_depth = 0;
    std::vector<std::uint8_t> rows;  // tightly packed, after the transforms requested
    std::size_t rowbytes = 0;
};

// `keep_indices`: palette images are left as indices and 16-bit grey kept at
// 16 bits (big-endian in `rows`). Otherwise everything is expanded to 8-bit RGB.
DecodedPng decode_png(const std::filesystem::path& path, bool keep_indices) {
    FilePtr f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    DecodedPng out;
    std::vector<png_bytep> row_ptrs;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("cannot decode PNG " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.color_type = png_get_color_type(png, info);
    out.bit_depth = png_get_bit_depth(png, info);

    if (keep_indices) {
        if (out.color_type != PNG_COLOR_TYPE_PALETTE && out.color_type != PNG_COLOR_TYPE_GRAY) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw FormatError("label PNG " + path.string() + " must be single-channel (grey or palette)");
        }
        if (out.bit_depth < 8) png_set_packing(png);
    } else {
        if (out.color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (out.color_type == PNG_COLOR_TYPE_GRAY && out.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (out.bit_depth == 16) png_set_strip_16(png);
        if (out.color_type == PNG_COLOR_TYPE_GRAY || out.color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        if (out.color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    out.rowbytes = png_get_rowbytes(png, info);
    out.rows.resize(out.rowbytes * out.height);
    row_ptrs.resize(out.height);
    for (std::size_t y = 0; y < out.height; ++y) row_ptrs[y] = out.rows.data() + y * out.rowbytes;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void encode_png(const std::filesystem::path& path, std::size_t width, std::size_t height, int color_type,
                int bit_depth, const std::vector<std::uint8_t>& rows, std::size_t rowbytes) {
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep> row_ptrs(height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("cannot write PNG " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < height; ++y)
        row_ptrs[y] = const_cast<png_bytep>(rows.data() + y * rowbytes);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    std::longjmp(reinterpret_cast<JpegError*>(cinfo->err)->jump, 1);
}

RgbImage decode_jpeg(const std::filesystem::path& path) {
    FilePtr f = open_file(path, "rb");
    jpeg_decompress_struct cinfo{};
    JpegError err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    RgbImage img;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw FormatError("cannot decode JPEG " + path.string());
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    img.width = cinfo.output_width;
    img.height = cinfo.output_height;
    img.pixels.resize(img.width * img.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

}  // namespace

RgbImage read_image(const std::filesystem::path& path) {
    unsigned char magic[8] = {};
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open image " + path.string());
        in.read(reinterpret_cast<char*>(magic), sizeof magic);
    }
    if (png_sig_cmp(magic, 0, 8) == 0) {
        DecodedPng d = decode_png(path, false);
        return {d.width, d.height, std::move(d.rows)};
    }
    if (magic[0] == 0xFF && magic[1] == 0xD8) return decode_jpeg(path);
    throw FormatError("unsupported image format (expected PNG or JPEG): " + path.string());
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
    if (image.pixels.size() != image.width * image.height * 3) throw DimensionError("RGB buffer size mismatch");
    encode_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 8, image.pixels, image.width * 3);
}

LabelMap read_label_png(const std::filesystem::path& path) {
    DecodedPng d = decode_png(path, true);
    LabelMap m{d.width, d.height, std::vector<std::uint16_t>(d.width * d.height)};
    for (std::size_t y = 0; y < d.height; ++y) {
        const std::uint8_t* row = d.rows.data() + y * d.rowbytes;
        for (std::size_t x = 0; x < d.width; ++x)
            m.labels[y * d.width + x] = d.bit_depth == 16
                                            ? static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1])
                                            : row[x];
    }
    return m;
}

void write_label_png(const std::filesystem::path& path, const LabelMap& labels) {
    if (labels.labels.size() != labels.width * labels.height) throw DimensionError("label buffer size mismatch");
    bool wide = false;
    for (auto v : labels.labels) wide |= v > 255;
    const std::size_t bpp = wide ? 2 : 1;
    std::vector<std::uint8_t> rows(labels.labels.size() * bpp);
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        if (wide) {
            rows[2 * i] = static_cast<std::uint8_t>(labels.labels[i] >> 8);
            rows[2 * i + 1] = static_cast<std::uint8_t>(labels.labels[i] & 0xFF);
        } else {
            rows[i] = static_cast<std::uint8_t>(labels.labels[i]);
        }
    }
    encode_png(path, labels.width, labels.height, PNG_COLOR_TYPE_GRAY, wide ? 16 : 8, rows, labels.width * bpp);
}

void write_gray_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& values) {
    if (values.size() != width * height) throw DimensionError("grey buffer size mismatch");
    encode_png(path, width, height, PNG_COLOR_TYPE_GRAY, 8, values, width);
}

Tensor to_tensor(const RgbImage& image) {
    const std::size_t h = image.height, w = image.width;
    if (image.pixels.size() != h * w * 3) throw DimensionError("RGB buffer size mismatch");
    Tensor t({3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                t[(c * h + y) * w + x] = static_cast<float>(image.pixels[(y * w + x) * 3 + c]) / 255.0f;
    return t;
}

}  // namespace naclip
