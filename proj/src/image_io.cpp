#include "capsnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "capsnet/binary_io.hpp"

namespace capsnet {

namespace io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw DataError("failed reading '" + path.string() + "'");
    return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot create '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace io

namespace {

// Header tokens are whitespace separated; '#' starts a comment running to end of line.
std::size_t pnm_token(const std::vector<std::uint8_t>& buf, std::size_t& pos, const std::string& file) {
    while (pos < buf.size()) {
        if (buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else if (std::isspace(buf[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < buf.size() && std::isdigit(buf[pos])) v = v * 10 + (buf[pos++] - '0');
    if (pos == start) throw DataError("malformed PNM header in '" + file + "'");
    return v;
}

}  // namespace

Image8 read_pnm(const std::filesystem::path& path) {
    const std::string file = path.string();
    const auto buf = io::read_file(path);
    if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6'))
        throw DataError("'" + file + "' is not a binary PGM/PPM image");
    Image8 img;
    img.channels = buf[1] == '5' ? 1 : 3;
    std::size_t pos = 2;
    img.width = pnm_token(buf, pos, file);
    img.height = pnm_token(buf, pos, file);
    const std::size_t maxval = pnm_token(buf, pos, file);
    if (img.width == 0 || img.height == 0) throw DataError("empty image in '" + file + "'");
    if (maxval == 0 || maxval > 255) throw DataError("unsupported maxval " + std::to_string(maxval) + " in '" + file + "'");
    ++pos;  // single whitespace before raster
    const std::size_t plane = img.width * img.height;
    const std::size_t n = plane * img.channels;
    if (pos + n > buf.size())
        throw DataError("truncated raster in '" + file + "': expected " + std::to_string(n) + " bytes");
    img.pixels.resize(n);
    // interleaved -> planar, rescaling non-255 maxval to the full byte range
    for (std::size_t p = 0; p < plane; ++p)
        for (std::size_t c = 0; c < img.channels; ++c) {
            std::size_t v = buf[pos + p * img.channels + c];
            if (maxval != 255) v = (v * 255 + maxval / 2) / maxval;
            img.pixels[c * plane + p] = static_cast<std::uint8_t>(std::min<std::size_t>(v, 255));
        }
    return img;
}

void write_pnm(const std::filesystem::path& path, const Image8& img) {
    if (img.channels != 1 && img.channels != 3) throw ContractError("PNM supports 1 or 3 channels");
    if (img.pixels.size() != img.channels * img.height * img.width)
        throw ShapeError("image pixel count does not match its dimensions");
    const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) +
                               " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    const std::size_t plane = img.width * img.height;
    for (std::size_t p = 0; p < plane; ++p)
        for (std::size_t c = 0; c < img.channels; ++c) bytes.push_back(img.pixels[c * plane + p]);
    io::write_file(path, bytes);
}

Tensor<float> rescale_u8(std::span<const std::uint8_t> pixels, const Shape& shape) {
    if (pixels.size() != shape_size(shape)) throw ShapeError("pixel count does not match " + shape_str(shape));
    Tensor<float> out(shape);
    for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = static_cast<float>(pixels[i]) / 255.0f;
    return out;
}

Tensor<float> rescale_u8(const Image8& image) {
    return rescale_u8(image.pixels, Shape{image.channels, image.height, image.width});
}

Image8 quantize_u8(const Tensor<float>& image) {
    if (image.rank() != 3) throw ShapeError("expected C x H x W, got " + shape_str(image.shape()));
    Image8 img{image.dim(0), image.dim(1), image.dim(2), std::vector<std::uint8_t>(image.size())};
    for (std::size_t i = 0; i < image.size(); ++i) {
        const float v = std::clamp(image[i], 0.0f, 1.0f);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return img;
}

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t out_h, std::size_t out_w) {
    if (image.rank() != 3) throw ShapeError("expected C x H x W, got " + shape_str(image.shape()));
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    if (H == out_h && W == out_w) return image;
    Tensor<float> out(Shape{C, out_h, out_w});
    const double sy = static_cast<double>(H) / static_cast<double>(out_h);
    const double sx = static_cast<double>(W) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, H - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, W - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < C; ++c) {
                const double v = (1 - wy) * ((1 - wx) * image(c, y0, x0) + wx * image(c, y0, x1)) +
                                 wy * ((1 - wx) * image(c, y1, x0) + wx * image(c, y1, x1));
                out(c, y, x) = static_cast<float>(v);
            }
        }
    }
    return out;
}

Tensor<float> convert_channels(const Tensor<float>& image, std::size_t channels) {
    const std::size_t C = image.dim(0);
    if (C == channels) return image;
    const std::size_t plane = image.dim(1) * image.dim(2);
    Tensor<float> out(Shape{channels, image.dim(1), image.dim(2)});
    if (C == 1) {
        for (std::size_t c = 0; c < channels; ++c)
            std::copy(image.ptr(), image.ptr() + plane, out.ptr() + c * plane);
        return out;
    }
    if (channels == 1) {
        for (std::size_t p = 0; p < plane; ++p) {
            double s = 0;
            for (std::size_t c = 0; c < C; ++c) s += image[c * plane + p];
            out[p] = static_cast<float>(s / static_cast<double>(C));
        }
        return out;
    }
    throw ShapeError("cannot convert " + std::to_string(C) + " channels to " + std::to_string(channels));
}

}  // namespace capsnet
