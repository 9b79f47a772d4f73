#include "stmre/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

namespace stmre {

namespace {

bool is_png(std::span<const std::uint8_t> bytes) {
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

Tensor decode_png(std::span<const std::uint8_t> bytes, const std::string& origin) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
        throw DecodeError(origin + ": " + img.message);
    }
    const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
    img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const std::size_t channels = color ? 3 : 1;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw DecodeError(origin + ": " + msg);
    }
    const std::size_t H = img.height, W = img.width;
    if (H == 0 || W == 0) throw DecodeError(origin + ": empty image");
    Tensor out({channels, H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < channels; ++c)
                out[(c * H + y) * W + x] = buf[(y * W + x) * channels + c] / 255.0f;
    return out;
}

class PnmParser {
public:
    PnmParser(std::span<const std::uint8_t> bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    Tensor parse() {
        if (bytes_.size() < 2 || bytes_[0] != 'P') throw DecodeError(origin_ + ": unsupported image format");
        const char kind = static_cast<char>(bytes_[1]);
        pos_ = 2;
        bool ascii = false;
        std::size_t channels = 0;
        switch (kind) {
            case '2': ascii = true; channels = 1; break;
            case '3': ascii = true; channels = 3; break;
            case '5': channels = 1; break;
            case '6': channels = 3; break;
            default: throw DecodeError(origin_ + ": unsupported PNM variant P" + std::string(1, kind));
        }
        const std::size_t W = number(), H = number(), maxval = number();
        if (W == 0 || H == 0 || maxval == 0 || maxval > 65535) throw DecodeError(origin_ + ": bad PNM header");
        Tensor out({channels, H, W});
        if (!ascii) {
            if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw DecodeError(origin_ + ": bad PNM header");
            ++pos_;
        }
        const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
        const std::size_t needed = W * H * channels * sample_bytes;
        if (!ascii && bytes_.size() - pos_ < needed) throw DecodeError(origin_ + ": truncated pixel data");
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                for (std::size_t c = 0; c < channels; ++c) {
                    std::size_t v = 0;
                    if (ascii) {
                        v = number();
                    } else if (sample_bytes == 2) {
                        v = (std::size_t{bytes_[pos_]} << 8) | bytes_[pos_ + 1];
                        pos_ += 2;
                    } else {
                        v = bytes_[pos_++];
                    }
                    if (v > maxval) throw DecodeError(origin_ + ": sample exceeds maxval");
                    out[(c * H + y) * W + x] = static_cast<float>(static_cast<double>(v) / maxval);
                }
        return out;
    }

private:
    std::size_t number() {
        for (;;) {
            while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
            if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
                continue;
            }
            break;
        }
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) throw DecodeError(origin_ + ": malformed PNM");
        std::size_t v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_++] - '0');
            if (v > (1u << 24)) throw DecodeError(origin_ + ": PNM value too large");
        }
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

std::uint8_t to_byte(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void check_image_rank(const Tensor& image) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
        throw DimensionError("expected a [1|3, H, W] image, got " + shape_str(image.shape()));
    }
}

}  // namespace

Tensor decode_image(std::span<const std::uint8_t> bytes, const std::string& origin) {
    if (bytes.empty()) throw DecodeError(origin + ": empty file");
    if (is_png(bytes)) return decode_png(bytes, origin);
    return PnmParser(bytes, origin).parse();
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DecodeError(path.string() + ": cannot open file");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
    check_image_rank(image);
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    if (H == out_h && W == out_w) return image;
    Tensor out({C, out_h, out_w});
    const double sy = static_cast<double>(H) / out_h, sx = static_cast<double>(W) / out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, H - 1);
        const double ty = fy - y0;
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, W - 1);
            const double tx = fx - x0;
            for (std::size_t c = 0; c < C; ++c) {
                const float* p = image.data() + c * H * W;
                const double top = p[y0 * W + x0] * (1 - tx) + p[y0 * W + x1] * tx;
                const double bottom = p[y1 * W + x0] * (1 - tx) + p[y1 * W + x1] * tx;
                out[(c * out_h + y) * out_w + x] = static_cast<float>(top * (1 - ty) + bottom * ty);
            }
        }
    }
    return out;
}

Tensor decode_resize(std::span<const std::uint8_t> bytes, const ImageShape& target, const std::string& origin) {
    if (target[0] != 1 && target[0] != 3) throw ArgumentError("target must have 1 or 3 channels");
    Tensor img = decode_image(bytes, origin);
    if (img.dim(0) != target[0]) {
        if (img.dim(0) == 1) {
            Tensor rgb({3, img.dim(1), img.dim(2)});
            const std::size_t plane = img.dim(1) * img.dim(2);
            for (std::size_t c = 0; c < 3; ++c) std::copy(img.data(), img.data() + plane, rgb.data() + c * plane);
            img = std::move(rgb);
        } else {
            // RGB to gray by channel mean.
            Tensor gray({1, img.dim(1), img.dim(2)});
            const std::size_t plane = img.dim(1) * img.dim(2);
            for (std::size_t i = 0; i < plane; ++i) gray[i] = (img[i] + img[plane + i] + img[2 * plane + i]) / 3.0f;
            img = std::move(gray);
        }
    }
    img = resize_bilinear(img, target[1], target[2]);
    for (auto& v : img.values()) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

Tensor load_image(const std::filesystem::path& path, const ImageShape& target) {
    const auto bytes = read_file_bytes(path);
    return decode_resize(bytes, target, path.string());
}

void write_pnm(const std::filesystem::path& path, const Tensor& image) {
    check_image_rank(image);
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << (C == 1 ? "P5" : "P6") << '\n' << W << ' ' << H << "\n255\n";
    std::vector<std::uint8_t> buf(C * H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < C; ++c) buf[(y * W + x) * C + c] = to_byte(image[(c * H + y) * W + x]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("failed writing " + path.string());
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
    check_image_rank(image);
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    std::vector<std::uint8_t> buf(C * H * W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            for (std::size_t c = 0; c < C; ++c) buf[(y * W + x) * C + c] = to_byte(image[(c * H + y) * W + x]);
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(W);
    img.height = static_cast<png_uint_32>(H);
    img.format = C == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw DataError("cannot write " + path.string() + ": " + img.message);
    }
}

}  // namespace stmre
