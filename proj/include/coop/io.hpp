#pragma once

#include <map>
#include <string>

#include "coop/image.hpp"

namespace coop {

// Binary P6 PPM, 8-bit, for color images. Grayscale buffers are expanded.
void write_ppm(const std::string& path, const ImageBuffer& img);
ImageBuffer read_ppm(const std::string& path);

// Little-endian PFM ("Pf" grayscale), rows bottom-to-top.
void write_pfm(const std::string& path, const GridD& g);
GridD read_pfm(const std::string& path);

// Flow fields are stored as two grayscale PFM planes <base>_x.pfm, <base>_y.pfm.
void write_flow_pfm(const std::string& base_path, const FlowField& f);
FlowField read_flow_pfm(const std::string& base_path);

void write_mask_pfm(const std::string& path, const PixelMask& m);
PixelMask read_mask_pfm(const std::string& path);

// Flat `key = value` manifest, one entry per line, '#' comments.
using Manifest = std::map<std::string, std::string>;
void write_manifest(const std::string& path, const Manifest& kv);
Manifest read_manifest(const std::string& path);

// Minimal CSV with a header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};
void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

}  // namespace coop
