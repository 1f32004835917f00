#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "asmpose/error.hpp"
#include "asmpose/refine.hpp"

namespace asmpose {

// Depth images travel as 16-bit grayscale PNG, one millimeter per unit,
// 0 = hole (the Azure Kinect convention).

inline void write_depth_png(const std::filesystem::path& path, const DepthImage& depth) {
    depth.validate();
    // pack to big-endian millimeter values before any libpng state exists
    std::vector<std::uint8_t> packed(static_cast<std::size_t>(depth.width) * depth.height * 2);
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        long mm = std::lround(depth.data[i] * 1000.0);
        if (mm < 0) mm = 0;
        if (mm > 65535) mm = 65535;
        packed[2 * i] = static_cast<std::uint8_t>(mm >> 8);
        packed[2 * i + 1] = static_cast<std::uint8_t>(mm & 0xff);
    }
    std::vector<png_bytep> rows(depth.height);
    for (int y = 0; y < depth.height; ++y)
        rows[y] = packed.data() + static_cast<std::size_t>(y) * depth.width * 2;

    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) fail(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        fail(ErrorCode::IoFailure, "libpng allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        fail(ErrorCode::IoFailure, "libpng write failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_compression_level(png, 1);
    png_set_IHDR(png, info, depth.width, depth.height, 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline DepthImage read_depth_png(const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) fail(ErrorCode::IoFailure, "cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        fail(ErrorCode::IoFailure, "libpng allocation failed");
    }

    // raw buffers live outside the setjmp scope
    std::vector<std::uint8_t> packed;
    std::vector<png_bytep> rows;
    int width = 0, height = 0;
    bool bad_format = false;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        fail(ErrorCode::CorruptDepth, "failed to decode " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(png, info) != 16) {
        bad_format = true;
    } else {
        packed.resize(static_cast<std::size_t>(width) * height * 2);
        rows.resize(height);
        for (int y = 0; y < height; ++y)
            rows[y] = packed.data() + static_cast<std::size_t>(y) * width * 2;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    if (bad_format)
        fail(ErrorCode::CorruptDepth, path.string() + ": expected 16-bit grayscale depth");

    DepthImage depth = DepthImage::zeros(width, height);
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        const unsigned mm = (static_cast<unsigned>(packed[2 * i]) << 8) | packed[2 * i + 1];
        depth.data[i] = mm / 1000.0;
    }
    return depth;
}

}  // namespace asmpose
