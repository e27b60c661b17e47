#include "fusesr/pfm.hpp"

#include <bit>
#include <fstream>
#include <vector>

namespace fusesr {

void write_pfm(const std::string& path, const Tensor& img) {
    static_assert(std::endian::native == std::endian::little,
                  "pfm writer assumes a little-endian host");
    if (img.b != 1 || (img.c != 1 && img.c != 3))
        throw ShapeError("write_pfm: image must be (1,1,h,w) or (1,3,h,w), "
                         "got " +
                         img.shape_str());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_pfm: cannot open for writing: " + path);
    os << (img.c == 3 ? "PF" : "Pf") << "\n"
       << img.w << " " << img.h << "\n"
       << "-1.0\n";
    std::vector<float> row(static_cast<size_t>(img.w) * img.c);
    for (int64_t y = img.h - 1; y >= 0; --y) {
        for (int64_t x = 0; x < img.w; ++x)
            for (int64_t ci = 0; ci < img.c; ++ci)
                row[static_cast<size_t>(x * img.c + ci)] =
                    img.at(0, ci, y, x);
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!os) throw IoError("write_pfm: write failed: " + path);
}

Tensor read_pfm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_pfm: cannot open: " + path);
    std::string tag;
    is >> tag;
    int64_t c = 0;
    if (tag == "PF")
        c = 3;
    else if (tag == "Pf")
        c = 1;
    else
        throw FormatError("read_pfm: bad header tag in " + path);
    int64_t w = 0, h = 0;
    double scale = 0.0;
    is >> w >> h >> scale;
    if (!is || w <= 0 || h <= 0)
        throw FormatError("read_pfm: bad dimensions in " + path);
    if (scale >= 0.0)
        throw FormatError("read_pfm: big-endian pfm unsupported: " + path);
    is.get();  // single whitespace byte terminating the header
    Tensor img(1, c, h, w);
    std::vector<float> row(static_cast<size_t>(w) * c);
    for (int64_t y = h - 1; y >= 0; --y) {
        is.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!is) throw FormatError("read_pfm: truncated pixel data in " + path);
        for (int64_t x = 0; x < w; ++x)
            for (int64_t ci = 0; ci < c; ++ci)
                img.at(0, ci, y, x) = row[static_cast<size_t>(x * c + ci)];
    }
    return img;
}

}  // namespace fusesr
