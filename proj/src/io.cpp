#include "lesionforge/io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "lesionforge/errors.hpp"

namespace fs = std::filesystem;

namespace lesionforge::io {

static_assert(std::endian::native == std::endian::little,
              "raw blobs and NIfTI payloads are written little-endian");

namespace {

// ---------------------------------------------------------------------------
// byte-level helpers
// ---------------------------------------------------------------------------

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<uint8_t> read_file_bytes(const std::string& path, size_t max_bytes = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<uint8_t> bytes;
  if (max_bytes == 0) {
    in.seekg(0, std::ios::end);
    const std::streamoff len = in.tellg();
    in.seekg(0, std::ios::beg);
    bytes.resize(static_cast<size_t>(len));
    if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), len);
  } else {
    bytes.resize(max_bytes);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(max_bytes));
    bytes.resize(static_cast<size_t>(in.gcount()));
  }
  return bytes;
}

bool is_gzip(const std::vector<uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

/// Inflate a gzip/zlib stream; stops early once `want` bytes are produced
/// (want == 0 decompresses everything).
std::vector<uint8_t> gunzip(const std::vector<uint8_t>& in, size_t want = 0) {
  z_stream strm{};
  if (inflateInit2(&strm, 15 + 32) != Z_OK) throw IoError("zlib inflateInit failed");
  std::vector<uint8_t> out;
  out.reserve(want ? want : in.size() * 3);
  std::array<uint8_t, 1 << 16> buf;
  strm.next_in = const_cast<Bytef*>(in.data());
  strm.avail_in = static_cast<uInt>(in.size());
  int ret = Z_OK;
  do {
    strm.next_out = buf.data();
    strm.avail_out = static_cast<uInt>(buf.size());
    ret = inflate(&strm, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&strm);
      throw IoError("corrupt gzip stream");
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - strm.avail_out));
    if (want && out.size() >= want) break;
  } while (ret != Z_STREAM_END && strm.avail_in > 0);
  inflateEnd(&strm);
  return out;
}

/// Deflate with a gzip wrapper. zlib writes mtime 0 in the header, so
/// identical payloads produce identical files.
std::vector<uint8_t> gzip_compress(const uint8_t* data, size_t len) {
  z_stream strm{};
  if (deflateInit2(&strm, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw IoError("zlib deflateInit failed");
  std::vector<uint8_t> out;
  std::array<uint8_t, 1 << 16> buf;
  strm.next_in = const_cast<Bytef*>(data);
  strm.avail_in = static_cast<uInt>(len);
  int ret = Z_OK;
  do {
    strm.next_out = buf.data();
    strm.avail_out = static_cast<uInt>(buf.size());
    ret = deflate(&strm, Z_FINISH);
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - strm.avail_out));
  } while (ret != Z_STREAM_END);
  deflateEnd(&strm);
  return out;
}

void write_file_bytes(const std::string& path, const uint8_t* data, size_t len) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// NIfTI-1
// ---------------------------------------------------------------------------

#pragma pack(push, 1)
struct Nifti1Header {
  int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  int32_t extents;
  int16_t session_error;
  char regular;
  char dim_info;
  int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  int16_t intent_code;
  int16_t datatype;
  int16_t bitpix;
  int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

enum NiftiDatatype : int16_t {
  DT_UINT8 = 2,
  DT_INT16 = 4,
  DT_INT32 = 8,
  DT_FLOAT32 = 16,
  DT_FLOAT64 = 64,
  DT_INT8 = 256,
  DT_UINT16 = 512,
  DT_UINT32 = 768,
};

template <typename T>
T byteswap_val(T v) {
  auto raw = std::bit_cast<std::array<uint8_t, sizeof(T)>>(v);
  std::reverse(raw.begin(), raw.end());
  return std::bit_cast<T>(raw);
}

void swap_header(Nifti1Header& h) {
  h.sizeof_hdr = byteswap_val(h.sizeof_hdr);
  for (auto& v : h.dim) v = byteswap_val(v);
  h.datatype = byteswap_val(h.datatype);
  h.bitpix = byteswap_val(h.bitpix);
  for (auto& v : h.pixdim) v = byteswap_val(v);
  h.vox_offset = byteswap_val(h.vox_offset);
  h.scl_slope = byteswap_val(h.scl_slope);
  h.scl_inter = byteswap_val(h.scl_inter);
  h.qform_code = byteswap_val(h.qform_code);
  h.sform_code = byteswap_val(h.sform_code);
}

size_t datatype_size(int16_t dt) {
  switch (dt) {
    case DT_UINT8:
    case DT_INT8: return 1;
    case DT_INT16:
    case DT_UINT16: return 2;
    case DT_INT32:
    case DT_UINT32:
    case DT_FLOAT32: return 4;
    case DT_FLOAT64: return 8;
    default: throw IoError("unsupported NIfTI datatype " + std::to_string(dt));
  }
}

struct NiftiFile {
  Nifti1Header header;
  bool swapped = false;
  std::vector<uint8_t> payload;  // voxel bytes, already past vox_offset
};

NiftiFile parse_nifti(std::vector<uint8_t> bytes, const std::string& path, bool header_only) {
  if (is_gzip(bytes)) bytes = gunzip(bytes, header_only ? sizeof(Nifti1Header) : 0);
  if (bytes.size() < sizeof(Nifti1Header)) throw IoError("truncated NIfTI header: " + path);
  NiftiFile f;
  std::memcpy(&f.header, bytes.data(), sizeof(Nifti1Header));
  if (f.header.sizeof_hdr != 348) {
    swap_header(f.header);
    f.swapped = true;
    if (f.header.sizeof_hdr != 348) throw IoError("not a NIfTI-1 file: " + path);
  }
  if (std::strncmp(f.header.magic, "n+1", 3) != 0 && std::strncmp(f.header.magic, "ni1", 3) != 0)
    throw IoError("missing NIfTI magic: " + path);
  if (f.header.dim[0] < 3 || f.header.dim[0] > 7)
    throw IoError("expected a 3D NIfTI volume: " + path);
  for (int i = 4; i <= f.header.dim[0]; ++i)
    if (f.header.dim[i] > 1) throw IoError("expected a 3D NIfTI volume (trailing dims > 1): " + path);
  if (header_only) return f;

  const size_t offset = static_cast<size_t>(f.header.vox_offset);
  const size_t nvox = static_cast<size_t>(f.header.dim[1]) * f.header.dim[2] * f.header.dim[3];
  const size_t need = nvox * datatype_size(f.header.datatype);
  if (offset < sizeof(Nifti1Header) || bytes.size() < offset + need)
    throw IoError("NIfTI header/data length mismatch: " + path);
  f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                   bytes.begin() + static_cast<std::ptrdiff_t>(offset + need));
  return f;
}

Dims3 nifti_dims(const Nifti1Header& h) { return Dims3(h.dim[1], h.dim[2], h.dim[3]); }

Spacing3 nifti_spacing(const Nifti1Header& h) {
  Spacing3 s(h.pixdim[1], h.pixdim[2], h.pixdim[3]);
  // Some writers leave pixdim 0; treat that as unit spacing.
  for (int i = 0; i < 3; ++i)
    if (!(s[i] > 0.0) || !std::isfinite(s[i])) s[i] = 1.0;
  return s;
}

template <typename Out, typename In>
void convert_payload(const std::vector<uint8_t>& payload, bool swapped, Out* dst, size_t n) {
  const In* src = reinterpret_cast<const In*>(payload.data());
  for (size_t i = 0; i < n; ++i) {
    In v = src[i];
    if (swapped) v = byteswap_val(v);
    dst[i] = static_cast<Out>(v);
  }
}

template <typename Out>
void decode_payload(const NiftiFile& f, Out* dst, size_t n) {
  switch (f.header.datatype) {
    case DT_UINT8: convert_payload<Out, uint8_t>(f.payload, false, dst, n); break;
    case DT_INT8: convert_payload<Out, int8_t>(f.payload, false, dst, n); break;
    case DT_INT16: convert_payload<Out, int16_t>(f.payload, f.swapped, dst, n); break;
    case DT_UINT16: convert_payload<Out, uint16_t>(f.payload, f.swapped, dst, n); break;
    case DT_INT32: convert_payload<Out, int32_t>(f.payload, f.swapped, dst, n); break;
    case DT_UINT32: convert_payload<Out, uint32_t>(f.payload, f.swapped, dst, n); break;
    case DT_FLOAT32: convert_payload<Out, float>(f.payload, f.swapped, dst, n); break;
    case DT_FLOAT64: convert_payload<Out, double>(f.payload, f.swapped, dst, n); break;
    default: throw IoError("unsupported NIfTI datatype");
  }
}

Nifti1Header make_header(const Dims3& dims, const Spacing3& spacing, int16_t datatype) {
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<int16_t>(dims[0]);
  h.dim[2] = static_cast<int16_t>(dims[1]);
  h.dim[3] = static_cast<int16_t>(dims[2]);
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.datatype = datatype;
  h.bitpix = static_cast<int16_t>(datatype_size(datatype) * 8);
  h.pixdim[0] = 1.0f;
  h.pixdim[1] = static_cast<float>(spacing[0]);
  h.pixdim[2] = static_cast<float>(spacing[1]);
  h.pixdim[3] = static_cast<float>(spacing[2]);
  h.vox_offset = 352.0f;  // header + 4-byte extension flag
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2;  // mm
  h.sform_code = 1;
  h.srow_x[0] = static_cast<float>(spacing[0]);
  h.srow_y[1] = static_cast<float>(spacing[1]);
  h.srow_z[2] = static_cast<float>(spacing[2]);
  std::snprintf(h.descrip, sizeof(h.descrip), "lesionforge");
  std::memcpy(h.magic, "n+1", 4);
  return h;
}

void write_nifti(const std::string& path, const Nifti1Header& header, const uint8_t* voxels,
                 size_t len) {
  std::vector<uint8_t> blob(sizeof(Nifti1Header) + 4 + len, 0);
  std::memcpy(blob.data(), &header, sizeof(Nifti1Header));
  std::memcpy(blob.data() + sizeof(Nifti1Header) + 4, voxels, len);
  if (ends_with(path, ".gz")) {
    const std::vector<uint8_t> gz = gzip_compress(blob.data(), blob.size());
    write_file_bytes(path, gz.data(), gz.size());
  } else {
    write_file_bytes(path, blob.data(), blob.size());
  }
}

// ---------------------------------------------------------------------------
// native format: <stem>.meta.json + <stem>.raw
// ---------------------------------------------------------------------------

std::string native_stem(const std::string& path) {
  if (ends_with(path, ".meta.json")) return path.substr(0, path.size() - 10);
  if (ends_with(path, ".raw")) return path.substr(0, path.size() - 4);
  throw IoError("native format path must end in .raw or .meta.json: " + path);
}

void write_native(const std::string& path, const Dims3& dims, const Spacing3& spacing,
                  const std::string& kind, const std::string& dtype, const uint8_t* data,
                  size_t len) {
  const std::string stem = native_stem(path);
  nlohmann::json meta;
  meta["schema"] = 1;
  meta["kind"] = kind;
  meta["dims"] = {dims[0], dims[1], dims[2]};
  meta["spacing"] = {spacing[0], spacing[1], spacing[2]};
  meta["dtype"] = dtype;
  meta["endianness"] = "little";
  meta["order"] = "x-fastest";
  std::ofstream mf(stem + ".meta.json", std::ios::trunc);
  if (!mf) throw IoError("cannot write " + stem + ".meta.json");
  mf << meta.dump(2) << "\n";
  write_file_bytes(stem + ".raw", data, len);
}

struct NativeFile {
  nlohmann::json meta;
  std::vector<uint8_t> raw;
};

NativeFile read_native(const std::string& path, bool header_only) {
  const std::string stem = native_stem(path);
  std::ifstream mf(stem + ".meta.json");
  if (!mf) throw IoError("cannot open " + stem + ".meta.json");
  NativeFile f;
  try {
    mf >> f.meta;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad native meta " + stem + ".meta.json: " + e.what());
  }
  if (f.meta.value("endianness", "little") != "little" || f.meta.value("order", "x-fastest") != "x-fastest")
    throw IoError("unsupported native layout in " + stem + ".meta.json");
  if (!header_only) f.raw = read_file_bytes(stem + ".raw");
  return f;
}

bool is_nifti_path(const std::string& path) {
  return ends_with(path, ".nii") || ends_with(path, ".nii.gz");
}

bool is_native_path(const std::string& path) {
  return ends_with(path, ".raw") || ends_with(path, ".meta.json");
}

template <typename Scalar>
Grid3<Scalar> grid_from_native(const NativeFile& f, const std::string& path) {
  const auto& meta = f.meta;
  if (!meta.contains("dims") || !meta.contains("spacing") || !meta.contains("dtype"))
    throw IoError("native meta missing fields: " + path);
  const Dims3 dims(meta["dims"][0].get<int>(), meta["dims"][1].get<int>(), meta["dims"][2].get<int>());
  const Spacing3 spacing(meta["spacing"][0].get<double>(), meta["spacing"][1].get<double>(),
                         meta["spacing"][2].get<double>());
  Grid3<Scalar> grid(dims, spacing);
  const std::string dtype = meta["dtype"].get<std::string>();
  const size_t n = static_cast<size_t>(grid.size());
  const auto need = [&](size_t bytes) {
    if (f.raw.size() != bytes) throw IoError("native raw size mismatch: " + path);
  };
  if (dtype == "float32") {
    need(n * 4);
    convert_payload<Scalar, float>(f.raw, false, grid.data().data(), n);
  } else if (dtype == "float64") {
    need(n * 8);
    convert_payload<Scalar, double>(f.raw, false, grid.data().data(), n);
  } else if (dtype == "int32") {
    need(n * 4);
    convert_payload<Scalar, int32_t>(f.raw, false, grid.data().data(), n);
  } else if (dtype == "uint8") {
    need(n);
    convert_payload<Scalar, uint8_t>(f.raw, false, grid.data().data(), n);
  } else {
    throw IoError("unsupported native dtype '" + dtype + "': " + path);
  }
  return grid;
}

}  // namespace

// ---------------------------------------------------------------------------
// public surface
// ---------------------------------------------------------------------------

Volume3D read_volume(const std::string& path) {
  if (is_native_path(path)) return grid_from_native<float>(read_native(path, false), path);
  if (!is_nifti_path(path)) throw IoError("unsupported volume format: " + path);
  const NiftiFile f = parse_nifti(read_file_bytes(path), path, false);
  Volume3D vol(nifti_dims(f.header), nifti_spacing(f.header));
  const size_t n = static_cast<size_t>(vol.size());
  decode_payload<float>(f, vol.data().data(), n);
  // Apply intensity scaling when the header declares one.
  if (f.header.scl_slope != 0.0f && (f.header.scl_slope != 1.0f || f.header.scl_inter != 0.0f))
    vol.data() = vol.data() * f.header.scl_slope + f.header.scl_inter;
  if (!vol.data().isFinite().all())
    throw IoError("volume contains non-finite intensities: " + path);
  return vol;
}

LabelMask read_mask(const std::string& path) {
  if (is_native_path(path)) return grid_from_native<int32_t>(read_native(path, false), path);
  if (!is_nifti_path(path)) throw IoError("unsupported mask format: " + path);
  const NiftiFile f = parse_nifti(read_file_bytes(path), path, false);
  switch (f.header.datatype) {
    case DT_UINT8:
    case DT_INT8:
    case DT_INT16:
    case DT_UINT16:
    case DT_INT32:
    case DT_UINT32: break;
    default:
      throw IoError("mask must use an integer datatype (labels are not coerced): " + path);
  }
  LabelMask mask(nifti_dims(f.header), nifti_spacing(f.header));
  decode_payload<int32_t>(f, mask.data().data(), static_cast<size_t>(mask.size()));
  if ((mask.data() < 0).any()) throw IoError("mask contains negative labels: " + path);
  return mask;
}

void write_volume(const Volume3D& vol, const std::string& path) {
  if (is_native_path(path)) {
    write_native(path, vol.dims(), vol.spacing(), "volume", "float32",
                 reinterpret_cast<const uint8_t*>(vol.data().data()),
                 static_cast<size_t>(vol.size()) * sizeof(float));
    return;
  }
  if (!is_nifti_path(path)) throw IoError("unsupported volume format: " + path);
  const Nifti1Header h = make_header(vol.dims(), vol.spacing(), DT_FLOAT32);
  write_nifti(path, h, reinterpret_cast<const uint8_t*>(vol.data().data()),
              static_cast<size_t>(vol.size()) * sizeof(float));
}

void write_mask(const LabelMask& mask, const std::string& path) {
  if ((mask.data() < 0).any()) throw ContractError("write_mask: negative labels");
  if (is_native_path(path)) {
    write_native(path, mask.dims(), mask.spacing(), "mask", "int32",
                 reinterpret_cast<const uint8_t*>(mask.data().data()),
                 static_cast<size_t>(mask.size()) * sizeof(int32_t));
    return;
  }
  if (!is_nifti_path(path)) throw IoError("unsupported mask format: " + path);
  const int32_t max_label = mask.size() ? mask.data().maxCoeff() : 0;
  int16_t dt = DT_UINT32;
  if (max_label <= 0xff) dt = DT_UINT8;
  else if (max_label <= 0xffff) dt = DT_UINT16;
  const Nifti1Header h = make_header(mask.dims(), mask.spacing(), dt);
  const size_t n = static_cast<size_t>(mask.size());
  std::vector<uint8_t> buf(n * datatype_size(dt));
  if (dt == DT_UINT8) {
    for (size_t i = 0; i < n; ++i) buf[i] = static_cast<uint8_t>(mask.data()[static_cast<Eigen::Index>(i)]);
  } else if (dt == DT_UINT16) {
    auto* p = reinterpret_cast<uint16_t*>(buf.data());
    for (size_t i = 0; i < n; ++i) p[i] = static_cast<uint16_t>(mask.data()[static_cast<Eigen::Index>(i)]);
  } else {
    auto* p = reinterpret_cast<uint32_t*>(buf.data());
    for (size_t i = 0; i < n; ++i) p[i] = static_cast<uint32_t>(mask.data()[static_cast<Eigen::Index>(i)]);
  }
  write_nifti(path, h, buf.data(), buf.size());
}

Grid3<double> read_map(const std::string& path) {
  if (is_native_path(path)) return grid_from_native<double>(read_native(path, false), path);
  if (!is_nifti_path(path)) throw IoError("unsupported map format: " + path);
  const NiftiFile f = parse_nifti(read_file_bytes(path), path, false);
  Grid3<double> map(nifti_dims(f.header), nifti_spacing(f.header));
  decode_payload<double>(f, map.data().data(), static_cast<size_t>(map.size()));
  return map;
}

void write_map(const Grid3<double>& map, const std::string& path) {
  if (is_native_path(path)) {
    write_native(path, map.dims(), map.spacing(), "map", "float64",
                 reinterpret_cast<const uint8_t*>(map.data().data()),
                 static_cast<size_t>(map.size()) * sizeof(double));
    return;
  }
  if (!is_nifti_path(path)) throw IoError("unsupported map format: " + path);
  const Nifti1Header h = make_header(map.dims(), map.spacing(), DT_FLOAT64);
  write_nifti(path, h, reinterpret_cast<const uint8_t*>(map.data().data()),
              static_cast<size_t>(map.size()) * sizeof(double));
}

std::pair<Dims3, Spacing3> probe_geometry(const std::string& path) {
  if (is_native_path(path)) {
    const NativeFile f = read_native(path, true);
    return {Dims3(f.meta["dims"][0].get<int>(), f.meta["dims"][1].get<int>(), f.meta["dims"][2].get<int>()),
            Spacing3(f.meta["spacing"][0].get<double>(), f.meta["spacing"][1].get<double>(),
                     f.meta["spacing"][2].get<double>())};
  }
  if (!is_nifti_path(path)) throw IoError("unsupported format: " + path);
  // Pull just enough compressed input to recover the header.
  std::vector<uint8_t> head = read_file_bytes(path, 1 << 16);
  const NiftiFile f = parse_nifti(std::move(head), path, true);
  return {nifti_dims(f.header), nifti_spacing(f.header)};
}

std::string resolve_path(const DatasetManifest& manifest, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute() || manifest.base_dir.empty()) return path;
  return (fs::path(manifest.base_dir) / p).string();
}

DatasetManifest load_manifest(const std::string& path, int32_t lesion_class_id) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  DatasetManifest manifest;
  manifest.lesion_class_id = lesion_class_id;
  manifest.base_dir = fs::path(path).parent_path().string();

  std::string line;
  size_t lineno = 0;
  std::set<std::string> subjects;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(lineno) + " is not valid JSON: " + e.what());
    }
    ManifestEntry e;
    if (!j.contains("image") || !j.contains("mask") || !j.contains("subject"))
      throw DataError("manifest line " + std::to_string(lineno) + " missing image/mask/subject");
    e.image = j["image"].get<std::string>();
    e.mask = j["mask"].get<std::string>();
    e.subject = j["subject"].get<std::string>();
    e.split = j.value("split", "");
    if (!subjects.insert(e.subject).second)
      throw DataError("duplicate subject_id in manifest: " + e.subject);
    manifest.entries.push_back(std::move(e));
  }
  if (manifest.entries.empty())
    throw DataError("manifest has no entries (augmentation requires at least one annotated pair)");

  for (const auto& e : manifest.entries) {
    const std::string img = resolve_path(manifest, e.image);
    const std::string msk = resolve_path(manifest, e.mask);
    const auto [idims, ispacing] = probe_geometry(img);
    const auto [mdims, mspacing] = probe_geometry(msk);
    if (!(idims == mdims).all())
      throw DataError("image/mask dims differ for subject " + e.subject);
    if (((ispacing - mspacing).abs() > 1e-5 * ispacing.abs().max(1e-12)).any())
      throw DataError("image/mask spacing differs for subject " + e.subject);
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// provenance
// ---------------------------------------------------------------------------

nlohmann::json to_json(const ProvenanceRecord& r) {
  nlohmann::json j;
  j["schema"] = r.schema;
  j["output_id"] = r.output_id;
  j["source_subject"] = r.source_subject;
  j["v_initial_mm3"] = r.v_initial_mm3;
  j["v_target_mm3"] = r.v_target_mm3;
  j["v_final_mm3"] = r.v_final_mm3;
  j["rng_seed"] = r.rng_seed;
  j["lesion_class_id"] = r.lesion_class_id;
  j["min_lesion_voxels"] = r.min_lesion_voxels;
  j["operations"] = nlohmann::json::array();
  for (const auto& op : r.operations) {
    nlohmann::json o;
    o["kind"] = op.kind;
    o["v_after_mm3"] = op.v_after_mm3;
    if (op.kind == "populate") {
      o["source_lesion_id"] = op.source_lesion_id;
      o["placement_center"] = {op.placement_center[0], op.placement_center[1], op.placement_center[2]};
      o["transform_params"] = op.transform_params;
      o["placed_voxels"] = op.placed_voxels;
      o["added_voxels"] = op.added_voxels;
    } else {
      o["lesion_ordinal"] = op.lesion_ordinal;
      o["inpaint_radius"] = op.inpaint_radius;
      o["blur_sigma"] = op.blur_sigma;
      o["removed_voxels"] = op.removed_voxels;
    }
    j["operations"].push_back(std::move(o));
  }
  return j;
}

ProvenanceRecord provenance_from_json(const nlohmann::json& j) {
  ProvenanceRecord r;
  r.schema = j.value("schema", -1);
  if (r.schema != 1)
    throw DataError("unsupported provenance schema " + std::to_string(r.schema));
  r.output_id = j.at("output_id").get<std::string>();
  r.source_subject = j.at("source_subject").get<std::string>();
  r.v_initial_mm3 = j.at("v_initial_mm3").get<double>();
  r.v_target_mm3 = j.at("v_target_mm3").get<double>();
  r.v_final_mm3 = j.at("v_final_mm3").get<double>();
  r.rng_seed = j.at("rng_seed").get<uint64_t>();
  r.lesion_class_id = j.value("lesion_class_id", 1);
  r.min_lesion_voxels = j.value("min_lesion_voxels", 1);
  for (const auto& o : j.at("operations")) {
    ProvenanceOp op;
    op.kind = o.at("kind").get<std::string>();
    op.v_after_mm3 = o.value("v_after_mm3", 0.0);
    if (op.kind == "populate") {
      op.source_lesion_id = o.at("source_lesion_id").get<std::string>();
      op.placement_center = {o.at("placement_center")[0].get<int>(),
                             o.at("placement_center")[1].get<int>(),
                             o.at("placement_center")[2].get<int>()};
      op.transform_params = o.at("transform_params");
      op.placed_voxels = o.value("placed_voxels", 0ll);
      op.added_voxels = o.value("added_voxels", 0ll);
    } else if (op.kind == "inpaint") {
      op.lesion_ordinal = o.at("lesion_ordinal").get<int>();
      op.inpaint_radius = o.at("inpaint_radius").get<int>();
      op.blur_sigma = o.at("blur_sigma").get<double>();
      op.removed_voxels = o.value("removed_voxels", 0ll);
    } else {
      throw DataError("unknown provenance op kind: " + op.kind);
    }
    r.operations.push_back(std::move(op));
  }
  return r;
}

void write_provenance(const ProvenanceRecord& record, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write provenance: " + path);
  out << to_json(record).dump(2) << "\n";
}

ProvenanceRecord read_provenance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open provenance: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad provenance JSON " + path + ": " + e.what());
  }
  return provenance_from_json(j);
}

}  // namespace lesionforge::io
