#include "e2v/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace e2v::io {

namespace {

[[noreturn]] void fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
    const auto n = get<std::uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

constexpr char kEvbMagic[8] = {'E', 'V', 'B', '1', 0, 0, 0, 0};

}  // namespace

bool file_exists(const std::string& path) {
    return std::filesystem::exists(path);
}

void ensure_dir(const std::string& path) {
    std::filesystem::create_directories(path);
}

// ---------------------------------------------------------------------------
// events
// ---------------------------------------------------------------------------

void write_evb1(const std::string& path, const EventStream& stream) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("cannot write", path);
    os.write(kEvbMagic, 8);
    put<std::uint16_t>(os, static_cast<std::uint16_t>(stream.resolution().width));
    put<std::uint16_t>(os, static_cast<std::uint16_t>(stream.resolution().height));
    put<std::uint64_t>(os, stream.size());
    for (const Event& e : stream.events()) {
        put<double>(os, e.t);
        put<std::uint16_t>(os, e.x);
        put<std::uint16_t>(os, e.y);
        put<std::int8_t>(os, e.p);
        put<std::int8_t>(os, 0);
    }
    if (!os) fail("write failed", path);
}

EventStream read_evb1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot read", path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kEvbMagic, 8) != 0) fail("bad EVB1 magic", path);
    Resolution res;
    res.width = get<std::uint16_t>(is);
    res.height = get<std::uint16_t>(is);
    const auto count = get<std::uint64_t>(is);
    std::vector<Event> events;
    events.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Event e;
        e.t = get<double>(is);
        e.x = get<std::uint16_t>(is);
        e.y = get<std::uint16_t>(is);
        e.p = get<std::int8_t>(is);
        get<std::int8_t>(is);  // pad
        events.push_back(e);
    }
    if (!is) fail("truncated EVB1 file", path);
    return EventStream(std::move(events), res);
}

void write_events_csv(const std::string& path, const EventStream& stream) {
    std::ofstream os(path);
    if (!os) fail("cannot write", path);
    os << "t,x,y,p\n";
    os.precision(17);
    for (const Event& e : stream.events()) {
        os << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.p) << '\n';
    }
}

EventStream read_events_csv(const std::string& path, Resolution res) {
    std::ifstream is(path);
    if (!is) fail("cannot read", path);
    std::string line;
    if (!std::getline(is, line) || line.rfind("t,x,y,p", 0) != 0) {
        fail("bad CSV header", path);
    }
    std::vector<Event> events;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double t;
        int x, y, p;
        if (!(ls >> t >> x >> y >> p)) fail("bad CSV row", path);
        events.push_back(Event{t, static_cast<std::uint16_t>(x),
                               static_cast<std::uint16_t>(y),
                               static_cast<std::int8_t>(p)});
    }
    return EventStream(std::move(events), res);
}

// ---------------------------------------------------------------------------
// images
// ---------------------------------------------------------------------------

void write_pgm(const std::string& path, const Array& image) {
    if (image.ndim() != 2) throw std::invalid_argument("write_pgm: expected (H,W)");
    const int h = image.dim(0), w = image.dim(1);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("cannot write", path);
    os << "P5\n" << w << ' ' << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = std::clamp(image.at(y, x), 0.0, 1.0);
            row[static_cast<std::size_t>(x)] =
                static_cast<unsigned char>(std::lround(v * 255.0));
        }
        os.write(reinterpret_cast<const char*>(row.data()), w);
    }
}

namespace {
void skip_pnm_ws(std::istream& is) {
    while (true) {
        int c = is.peek();
        if (c == '#') {
            std::string dummy;
            std::getline(is, dummy);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            break;
        }
    }
}
}  // namespace

Array read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot read", path);
    std::string magic;
    is >> magic;
    if (magic != "P5") fail("bad PGM magic", path);
    skip_pnm_ws(is);
    int w, h, maxval;
    is >> w;
    skip_pnm_ws(is);
    is >> h;
    skip_pnm_ws(is);
    is >> maxval;
    is.get();  // single whitespace after header
    if (maxval != 255) fail("unsupported PGM maxval", path);
    Array img({h, w});
    std::vector<unsigned char> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), w);
        for (int x = 0; x < w; ++x) {
            img.at(y, x) = static_cast<double>(row[static_cast<std::size_t>(x)]) / 255.0;
        }
    }
    if (!is) fail("truncated PGM", path);
    return img;
}

void write_pbm(const std::string& path, const Array& mask) {
    if (mask.ndim() != 2) throw std::invalid_argument("write_pbm: expected (H,W)");
    const int h = mask.dim(0), w = mask.dim(1);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("cannot write", path);
    os << "P4\n" << w << ' ' << h << '\n';
    const int stride = (w + 7) / 8;
    std::vector<unsigned char> row(static_cast<std::size_t>(stride));
    for (int y = 0; y < h; ++y) {
        std::fill(row.begin(), row.end(), 0);
        for (int x = 0; x < w; ++x) {
            if (mask.at(y, x) != 0.0) {
                row[static_cast<std::size_t>(x / 8)] |=
                    static_cast<unsigned char>(0x80u >> (x % 8));
            }
        }
        os.write(reinterpret_cast<const char*>(row.data()), stride);
    }
}

Array read_pbm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot read", path);
    std::string magic;
    is >> magic;
    if (magic != "P4") fail("bad PBM magic", path);
    skip_pnm_ws(is);
    int w, h;
    is >> w;
    skip_pnm_ws(is);
    is >> h;
    is.get();
    Array mask({h, w});
    const int stride = (w + 7) / 8;
    std::vector<unsigned char> row(static_cast<std::size_t>(stride));
    for (int y = 0; y < h; ++y) {
        is.read(reinterpret_cast<char*>(row.data()), stride);
        for (int x = 0; x < w; ++x) {
            mask.at(y, x) =
                (row[static_cast<std::size_t>(x / 8)] & (0x80u >> (x % 8))) ? 1.0 : 0.0;
        }
    }
    if (!is) fail("truncated PBM", path);
    return mask;
}

void write_flo2(const std::string& path, const Array& flow) {
    if (flow.ndim() != 3 || flow.dim(0) != 2) {
        throw std::invalid_argument("write_flo2: expected (2,H,W)");
    }
    const int h = flow.dim(1), w = flow.dim(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("cannot write", path);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            put<float>(os, static_cast<float>(flow.at(0, y, x)));
            put<float>(os, static_cast<float>(flow.at(1, y, x)));
        }
    }
}

Array read_flo2(const std::string& path, int height, int width) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot read", path);
    Array flow({2, height, width});
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            flow.at(0, y, x) = get<float>(is);
            flow.at(1, y, x) = get<float>(is);
        }
    }
    if (!is) fail("truncated flo2", path);
    return flow;
}

// ---------------------------------------------------------------------------
// metadata
// ---------------------------------------------------------------------------

void write_meta(const std::string& path, const std::map<std::string, std::string>& kv) {
    std::ofstream os(path);
    if (!os) fail("cannot write", path);
    os << "{\n";
    std::size_t i = 0;
    for (const auto& [k, v] : kv) {
        os << "  \"" << k << "\": \"" << v << '"';
        if (++i != kv.size()) os << ',';
        os << '\n';
    }
    os << "}\n";
}

std::map<std::string, std::string> read_meta(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("cannot read", path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto q1 = line.find('"');
        if (q1 == std::string::npos) continue;
        const auto q2 = line.find('"', q1 + 1);
        const auto q3 = line.find('"', q2 + 1);
        const auto q4 = line.find('"', q3 + 1);
        if (q2 == std::string::npos || q3 == std::string::npos || q4 == std::string::npos) {
            continue;
        }
        kv[line.substr(q1 + 1, q2 - q1 - 1)] = line.substr(q3 + 1, q4 - q3 - 1);
    }
    return kv;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("cannot write", path);
    os << "E2VCKPT/1\n";
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.config.size()));
    for (const auto& [k, v] : ckpt.config) {
        put_string(os, k);
        put_string(os, v);
    }
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, arr] : ckpt.params) {
        put_string(os, name);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(arr.ndim()));
        for (int d = 0; d < arr.ndim(); ++d) {
            put<std::uint32_t>(os, static_cast<std::uint32_t>(arr.dim(d)));
        }
        os.write(reinterpret_cast<const char*>(arr.data()),
                 static_cast<std::streamsize>(arr.size() * sizeof(double)));
    }
    if (!os) fail("write failed", path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot read", path);
    std::string magic;
    std::getline(is, magic);
    if (magic != "E2VCKPT/1") fail("bad checkpoint magic", path);
    Checkpoint ckpt;
    const auto nconf = get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < nconf; ++i) {
        std::string k = get_string(is);
        ckpt.config[k] = get_string(is);
    }
    const auto nparams = get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < nparams; ++i) {
        std::string name = get_string(is);
        const auto ndim = get<std::uint32_t>(is);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(get<std::uint32_t>(is));
        Array arr(shape);
        is.read(reinterpret_cast<char*>(arr.data()),
                static_cast<std::streamsize>(arr.size() * sizeof(double)));
        ckpt.params.emplace_back(std::move(name), std::move(arr));
    }
    if (!is) fail("truncated checkpoint", path);
    return ckpt;
}

// ---------------------------------------------------------------------------
// teacher cache
// ---------------------------------------------------------------------------

void write_teacher_record(const std::string& path, const TeacherRecord& rec) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("cannot write", path);
    os.write("TCH1", 4);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.feature.dim(0)));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.feature.dim(1)));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.feature.dim(2)));
    for (std::size_t i = 0; i < rec.feature.size(); ++i) {
        put<float>(os, static_cast<float>(rec.feature[i]));
    }
    put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.masks.dim(0)));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.masks.dim(1)));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.masks.dim(2)));
    const std::size_t bits = rec.masks.size();
    std::vector<unsigned char> packed((bits + 7) / 8, 0);
    for (std::size_t i = 0; i < bits; ++i) {
        if (rec.masks[i] != 0.0) packed[i / 8] |= static_cast<unsigned char>(0x80u >> (i % 8));
    }
    os.write(reinterpret_cast<const char*>(packed.data()),
             static_cast<std::streamsize>(packed.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(rec.category_ids.size()));
    for (auto id : rec.category_ids) put<std::int32_t>(os, id);
    if (!os) fail("write failed", path);
}

TeacherRecord read_teacher_record(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("cannot read", path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TCH1", 4) != 0) fail("bad teacher record", path);
    TeacherRecord rec;
    const int c = static_cast<int>(get<std::uint32_t>(is));
    const int hf = static_cast<int>(get<std::uint32_t>(is));
    const int wf = static_cast<int>(get<std::uint32_t>(is));
    rec.feature = Array({c, hf, wf});
    for (std::size_t i = 0; i < rec.feature.size(); ++i) {
        rec.feature[i] = static_cast<double>(get<float>(is));
    }
    const int n = static_cast<int>(get<std::uint32_t>(is));
    const int h = static_cast<int>(get<std::uint32_t>(is));
    const int w = static_cast<int>(get<std::uint32_t>(is));
    rec.masks = Array({n, h, w});
    const std::size_t bits = rec.masks.size();
    std::vector<unsigned char> packed((bits + 7) / 8);
    is.read(reinterpret_cast<char*>(packed.data()),
            static_cast<std::streamsize>(packed.size()));
    for (std::size_t i = 0; i < bits; ++i) {
        rec.masks[i] = (packed[i / 8] & (0x80u >> (i % 8))) ? 1.0 : 0.0;
    }
    const auto nids = get<std::uint32_t>(is);
    rec.category_ids.resize(nids);
    for (auto& id : rec.category_ids) id = get<std::int32_t>(is);
    if (!is) fail("truncated teacher record", path);
    return rec;
}

}  // namespace e2v::io
