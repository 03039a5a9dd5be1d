#include "texgen/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

namespace texgen {

uint8_t to_byte(double v) {
    double s = std::clamp((v + 1.0) * 0.5, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(s * 255.0));
}

double from_byte(uint8_t b) { return static_cast<double>(b) / 255.0 * 2.0 - 1.0; }

Grid quantize8(const Grid& image) {
    Grid out = image;
    for (double& v : out.data) v = from_byte(to_byte(v));
    return out;
}

void write_ppm(const std::filesystem::path& path, const Grid& image) {
    require(image.channels == 3 || image.channels == 1, "write_ppm: expected 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<uint8_t> bytes;
    bytes.reserve(image.texels() * 3);
    for (size_t i = 0; i < image.texels(); ++i) {
        for (int c = 0; c < 3; ++c) {
            int ch = image.channels == 1 ? 0 : c;
            bytes.push_back(to_byte(image.data[i * image.channels + ch]));
        }
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::string next_token(std::istream& in) {
    std::string tok;
    while (in) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    in >> tok;
    return tok;
}

}  // namespace

Grid read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path.string());
    if (next_token(in) != "P6") throw MalformedInputError("not a binary PPM (P6): " + path.string());
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token(in));
        h = std::stoi(next_token(in));
        maxval = std::stoi(next_token(in));
    } catch (const std::exception&) {
        throw MalformedInputError("bad PPM header: " + path.string());
    }
    if (w <= 0 || h <= 0 || maxval != 255) throw MalformedInputError("unsupported PPM header: " + path.string());
    in.get();
    Grid img(h, w, 3);
    std::vector<uint8_t> bytes(img.data.size());
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw MalformedInputError("truncated PPM data: " + path.string());
    for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = from_byte(bytes[i]);
    return img;
}

uint64_t file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a(content);
}

}  // namespace texgen
