#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "e2v/array.hpp"
#include "e2v/events.hpp"

namespace e2v::io {

// "EVB1" binary event file: 8-byte magic "EVB1\0\0\0\0", little-endian header
// {W: u16, H: u16, count: u64}, then count records {t: f64, x: u16, y: u16,
// p: i8, pad: i8}.
void write_evb1(const std::string& path, const EventStream& stream);
EventStream read_evb1(const std::string& path);

// CSV fallback with a "t,x,y,p" header line.
void write_events_csv(const std::string& path, const EventStream& stream);
EventStream read_events_csv(const std::string& path, Resolution res);

// 8-bit binary PGM (P5), values clamped to [0,1] then scaled by 255.
void write_pgm(const std::string& path, const Array& image);
Array read_pgm(const std::string& path);

// Binary PBM (P4); nonzero pixels set the bit.
void write_pbm(const std::string& path, const Array& mask);
Array read_pbm(const std::string& path);

// ".flo2": raw little-endian f32 (u, v) pairs, row-major. Resolution comes
// from the sequence metadata.
void write_flo2(const std::string& path, const Array& flow);  // (2,H,W)
Array read_flo2(const std::string& path, int height, int width);

// Flat key/value metadata serialized as a json-like text file.
void write_meta(const std::string& path, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_meta(const std::string& path);

// Checkpoint container "E2VCKPT/1": config entries plus named f64 arrays.
struct Checkpoint {
    std::map<std::string, std::string> config;
    std::vector<std::pair<std::string, Array>> params;
};
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Teacher cache entry "TCH1": f32 feature volume, packed mask bits, ids.
struct TeacherRecord {
    Array feature;            // (C, h_f, w_f)
    Array masks;              // (N, h, w) binary
    std::vector<std::int32_t> category_ids;  // length N, -1 = padding
};
void write_teacher_record(const std::string& path, const TeacherRecord& rec);
TeacherRecord read_teacher_record(const std::string& path);

bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

}  // namespace e2v::io
