#include "wmlab/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace wmlab {

namespace {

uint8_t to_byte(float x) {
    float v = std::clamp(x, 0.0f, 1.0f) * 255.0f;
    return static_cast<uint8_t>(std::lround(v));
}

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* f = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (f) std::fclose(f);
    }
};

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* f = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (f) std::fclose(f);
    }
};

}  // namespace

Image read_png(const std::string& path) {
    PngReadCloser st;
    st.f = std::fopen(path.c_str(), "rb");
    if (!st.f) throw ComputeError("read_png: cannot open " + path);
    st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    st.info = png_create_info_struct(st.png);
    if (setjmp(png_jmpbuf(st.png))) throw ComputeError("read_png: decode failed for " + path);
    png_init_io(st.png, st.f);
    png_read_info(st.png, st.info);

    png_uint_32 w = png_get_image_width(st.png, st.info);
    png_uint_32 h = png_get_image_height(st.png, st.info);
    int bit_depth = png_get_bit_depth(st.png, st.info);
    int color_type = png_get_color_type(st.png, st.info);

    if (bit_depth == 16) png_set_strip_16(st.png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(st.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(st.png);
    if (png_get_valid(st.png, st.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(st.png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(st.png);
    png_set_strip_alpha(st.png);
    png_read_update_info(st.png, st.info);

    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    Image img(3, static_cast<int>(h), static_cast<int>(w), Domain::Unit);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(st.png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.t.at(c, static_cast<int>(y), static_cast<int>(x)) = row[3 * x + c] / 255.0f;
    }
    png_read_end(st.png, nullptr);
    return img;
}

void write_png(const std::string& path, const Image& img) {
    require_usage(img.channels() == 3, "write_png: expected a 3-channel image");
    Image unit = clipped_to_unit(img);
    PngWriteCloser st;
    st.f = std::fopen(path.c_str(), "wb");
    if (!st.f) throw ComputeError("write_png: cannot open " + path);
    st.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    st.info = png_create_info_struct(st.png);
    if (setjmp(png_jmpbuf(st.png))) throw ComputeError("write_png: encode failed for " + path);
    png_init_io(st.png, st.f);
    png_set_IHDR(st.png, st.info, unit.width(), unit.height(), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(st.png, st.info);
    std::vector<uint8_t> row(static_cast<size_t>(unit.width()) * 3);
    for (int y = 0; y < unit.height(); ++y) {
        for (int x = 0; x < unit.width(); ++x)
            for (int c = 0; c < 3; ++c) row[3 * x + c] = to_byte(unit.t.at(c, y, x));
        png_write_row(st.png, row.data());
    }
    png_write_end(st.png, nullptr);
}

namespace {

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    longjmp(err->jump, 1);
}

}  // namespace

Image jpeg_round_trip(const Image& img, int quality) {
    require_usage(quality >= 1 && quality <= 100, "jpeg_round_trip: quality must be in [1,100]");
    require_usage(img.channels() == 3, "jpeg_round_trip: expected a 3-channel image");
    Image unit = clipped_to_unit(img);
    const int h = unit.height(), w = unit.width();

    std::vector<uint8_t> rgb(static_cast<size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) rgb[(static_cast<size_t>(y) * w + x) * 3 + c] = to_byte(unit.t.at(c, y, x));

    // encode
    jpeg_compress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    unsigned char* buf = nullptr;
    unsigned long buf_size = 0;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_compress(&cinfo);
        if (buf) free(buf);
        throw ComputeError("jpeg_round_trip: encode failed");
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buf, &buf_size);
    cinfo.image_width = w;
    cinfo.image_height = h;
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    for (int c = 0; c < 3; ++c) {
        cinfo.comp_info[c].h_samp_factor = 1;  // 4:4:4, matches the training surrogate
        cinfo.comp_info[c].v_samp_factor = 1;
    }
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW rowp = &rgb[static_cast<size_t>(cinfo.next_scanline) * w * 3];
        jpeg_write_scanlines(&cinfo, &rowp, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);

    // decode
    jpeg_decompress_struct dinfo;
    JpegErrorMgr djerr;
    dinfo.err = jpeg_std_error(&djerr.pub);
    djerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(djerr.jump)) {
        jpeg_destroy_decompress(&dinfo);
        free(buf);
        throw ComputeError("jpeg_round_trip: decode failed");
    }
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, buf, buf_size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&dinfo);
    Image out(3, h, w, Domain::Unit);
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    while (dinfo.output_scanline < dinfo.output_height) {
        int y = static_cast<int>(dinfo.output_scanline);
        JSAMPROW rowp = row.data();
        jpeg_read_scanlines(&dinfo, &rowp, 1);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.t.at(c, y, x) = row[3 * x + c] / 255.0f;
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
    free(buf);
    return out;
}

Image center_crop_resize(const Image& img, int h, int w) {
    require_usage(h > 0 && w > 0, "center_crop_resize: target must be positive");
    const int side = std::min(img.height(), img.width());
    const int y0 = (img.height() - side) / 2;
    const int x0 = (img.width() - side) / 2;
    Image out(img.channels(), h, w, img.domain);
    // box average over the source footprint of each target pixel
    for (int c = 0; c < img.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            const double sy0 = y0 + static_cast<double>(y) * side / h;
            const double sy1 = y0 + static_cast<double>(y + 1) * side / h;
            for (int x = 0; x < w; ++x) {
                const double sx0 = x0 + static_cast<double>(x) * side / w;
                const double sx1 = x0 + static_cast<double>(x + 1) * side / w;
                double acc = 0.0, area = 0.0;
                for (int sy = static_cast<int>(sy0); sy < static_cast<int>(std::ceil(sy1)); ++sy) {
                    const double wy = std::min<double>(sy + 1, sy1) - std::max<double>(sy, sy0);
                    for (int sx = static_cast<int>(sx0); sx < static_cast<int>(std::ceil(sx1)); ++sx) {
                        const double wx = std::min<double>(sx + 1, sx1) - std::max<double>(sx, sx0);
                        acc += wy * wx * img.t.at(c, std::min(sy, img.height() - 1), std::min(sx, img.width() - 1));
                        area += wy * wx;
                    }
                }
                out.t.at(c, y, x) = static_cast<float>(acc / area);
            }
        }
    }
    return out;
}

}  // namespace wmlab
