#include "sitsx/image_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>
#include <png.h>

#include "sitsx/errors.hpp"

namespace sitsx {

namespace {

struct FileCloser {
    std::FILE* f = nullptr;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace

Raster8 read_png(const std::filesystem::path& path) {
    FileCloser fc{std::fopen(path.string().c_str(), "rb")};
    if (!fc.f) throw UnreadableImage("cannot open " + path.string());

    png_byte sig[8];
    if (std::fread(sig, 1, 8, fc.f) != 8 || png_sig_cmp(sig, 0, 8))
        throw UnreadableImage("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnreadableImage("PNG decode error: " + path.string());
    }
    png_init_io(png, fc.f);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnreadableImage("unsupported PNG channel count in " + path.string());
    }

    Raster8 out;
    out.channels = channels;
    out.height = static_cast<int>(h);
    out.width = static_cast<int>(w);
    out.data.resize(static_cast<size_t>(h) * w * channels);

    std::vector<png_bytep> rows(h);
    size_t stride = static_cast<size_t>(w) * channels;
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = out.data.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png(const std::filesystem::path& path, const Raster8& img) {
    if (img.channels != 1 && img.channels != 3)
        throw DataError("write_png: only 1- or 3-channel rasters supported");

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        FileCloser fc{std::fopen(tmp.string().c_str(), "wb")};
        if (!fc.f) throw DataError("cannot create " + tmp.string());

        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        png_infop info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info) {
            png_destroy_write_struct(&png, &info);
            throw DataError("libpng init failed");
        }
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw DataError("PNG encode error: " + path.string());
        }
        png_init_io(png, fc.f);
        png_set_IHDR(png, info, img.width, img.height, 8,
                     img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);

        size_t stride = static_cast<size_t>(img.width) * img.channels;
        for (int y = 0; y < img.height; ++y)
            png_write_row(png, const_cast<png_bytep>(img.data.data() + y * stride));
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    }
    std::filesystem::rename(tmp, path);
}

namespace {

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

}  // namespace

Raster8 read_jpeg(const std::filesystem::path& path) {
    FileCloser fc{std::fopen(path.string().c_str(), "rb")};
    if (!fc.f) throw UnreadableImage("cannot open " + path.string());

    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw UnreadableImage("JPEG decode error: " + path.string());
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fc.f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);

    Raster8 out;
    out.channels = cinfo.output_components;
    out.height = static_cast<int>(cinfo.output_height);
    out.width = static_cast<int>(cinfo.output_width);
    out.data.resize(static_cast<size_t>(out.height) * out.width * out.channels);

    size_t stride = static_cast<size_t>(out.width) * out.channels;
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.data.data() + cinfo.output_scanline * stride;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

Raster8 read_raster(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return read_png(path);
    if (ext == ".jpg" || ext == ".jpeg") return read_jpeg(path);
    throw UnreadableImage("unsupported image format: " + path.string());
}

Raster8 to_raster8(const Image& img) {
    Raster8 r;
    r.channels = img.channels;
    r.height = img.height;
    r.width = img.width;
    r.data.resize(img.size());
    size_t i = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) r.data[i++] = quantize8(img.at(c, y, x));
    return r;
}

Image to_image(const Raster8& r) {
    Image img(r.channels, r.height, r.width);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x)
            for (int c = 0; c < r.channels; ++c) img.at(c, y, x) = dequantize8(r.at(y, x, c));
    return img;
}

Raster8 mask_to_raster8(const std::vector<float>& mask, int side) {
    if (static_cast<int>(mask.size()) != side * side)
        throw ShapeMismatch("mask_to_raster8: size mismatch");
    Raster8 r;
    r.channels = 1;
    r.height = side;
    r.width = side;
    r.data.resize(mask.size());
    for (size_t i = 0; i < mask.size(); ++i) r.data[i] = quantize8(mask[i]);
    return r;
}

void write_image_png(const std::filesystem::path& path, const Image& img) {
    write_png(path, to_raster8(img));
}

Image read_image(const std::filesystem::path& path) { return to_image(read_raster(path)); }

}  // namespace sitsx
