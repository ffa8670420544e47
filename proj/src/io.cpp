#include "coop/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace coop {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    return f;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    return f;
}

}  // namespace

void write_ppm(const std::string& path, const ImageBuffer& img) {
    std::ofstream f = open_out(path);
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                const double v = img.at(y, x, img.c == 3 ? ch : 0);
                const int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
                row[static_cast<size_t>(x) * 3 + ch] = static_cast<unsigned char>(q);
            }
        }
        f.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!f) throw IoError("short write: " + path);
}

ImageBuffer read_ppm(const std::string& path) {
    std::ifstream f = open_in(path);
    std::string magic;
    int w, h, maxv;
    f >> magic >> w >> h >> maxv;
    if (magic != "P6" || maxv != 255 || w <= 0 || h <= 0) {
        throw IoError("unsupported PPM header in " + path);
    }
    f.get();  // single whitespace after header
    ImageBuffer img(h, w, 3);
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), row.size());
        if (!f) throw IoError("short read: " + path);
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                img.at(y, x, ch) = row[static_cast<size_t>(x) * 3 + ch] / 255.0;
    }
    return img;
}

void write_pfm(const std::string& path, const GridD& g) {
    std::ofstream f = open_out(path);
    f << "Pf\n" << g.w << " " << g.h << "\n-1.0\n";  // negative scale = little endian
    std::vector<float> row(g.w);
    for (int y = g.h - 1; y >= 0; --y) {  // bottom-to-top
        for (int x = 0; x < g.w; ++x) row[x] = static_cast<float>(g.at(y, x));
        f.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
    }
    if (!f) throw IoError("short write: " + path);
}

GridD read_pfm(const std::string& path) {
    std::ifstream f = open_in(path);
    std::string magic;
    int w, h;
    double scale;
    f >> magic >> w >> h >> scale;
    if (magic != "Pf" || w <= 0 || h <= 0 || scale >= 0) {
        throw IoError("unsupported PFM header in " + path);
    }
    f.get();
    GridD g(h, w);
    std::vector<float> row(w);
    for (int y = h - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
        if (!f) throw IoError("short read: " + path);
        for (int x = 0; x < w; ++x) g.at(y, x) = row[x];
    }
    return g;
}

void write_flow_pfm(const std::string& base_path, const FlowField& flow) {
    write_pfm(base_path + "_x.pfm", flow.x);
    write_pfm(base_path + "_y.pfm", flow.y);
}

FlowField read_flow_pfm(const std::string& base_path) {
    FlowField f;
    f.x = read_pfm(base_path + "_x.pfm");
    f.y = read_pfm(base_path + "_y.pfm");
    if (!f.x.same_shape(f.y)) throw IoError("flow planes disagree: " + base_path);
    return f;
}

void write_mask_pfm(const std::string& path, const PixelMask& m) {
    GridD g(m.h(), m.w());
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = m.m.v[i] ? 1.0 : 0.0;
    write_pfm(path, g);
}

PixelMask read_mask_pfm(const std::string& path) {
    const GridD g = read_pfm(path);
    PixelMask m(g.h, g.w);
    for (size_t i = 0; i < g.v.size(); ++i) m.m.v[i] = g.v[i] > 0.5 ? 1 : 0;
    return m;
}

void write_manifest(const std::string& path, const Manifest& kv) {
    std::ofstream f = open_out(path);
    for (const auto& [k, v] : kv) f << k << " = " << v << "\n";
    if (!f) throw IoError("short write: " + path);
}

Manifest read_manifest(const std::string& path) {
    std::ifstream f = open_in(path);
    Manifest kv;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream f = open_out(path);
    f.precision(12);
    for (size_t i = 0; i < table.header.size(); ++i) {
        f << table.header[i] << (i + 1 < table.header.size() ? "," : "");
    }
    f << "\n";
    for (const auto& row : table.rows) {
        for (size_t i = 0; i < row.size(); ++i) f << row[i] << (i + 1 < row.size() ? "," : "");
        f << "\n";
    }
    if (!f) throw IoError("short write: " + path);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream f = open_in(path);
    CsvTable t;
    std::string line;
    if (!std::getline(f, line)) throw IoError("empty CSV: " + path);
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.header.push_back(cell);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream rs(line);
        while (std::getline(rs, cell, ',')) row.push_back(std::stod(cell));
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace coop
