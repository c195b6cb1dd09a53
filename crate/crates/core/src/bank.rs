//! Disease-tagged memory banks and their versioned on-disk format.
//!
//! Two banks back the retrieval stage: the visual bank holds patch-level
//! features mined from masked images, the report memory holds sentence-level
//! report embeddings. Features live in `f64` in memory and are narrowed once
//! to little-endian `f32` on disk, so a save/load round trip is idempotent.
//!
//! File layout (all integers little endian):
//!
//! ```text
//! magic    8 bytes  "AMMRGBNK"
//! version  u16      1
//! kind     u8       0 = visual, 1 = report
//! dim      u32      feature dimension
//! count    u64      number of entries
//! entries  ...      per-kind records, see below
//! ```
//!
//! Visual entry: `disease_id u8 | patch_index u32 | source_image_id str |
//! feature dim*f32`. Report entry: `disease_labels u16 | source_report_id str
//! | sentence_text str | feature dim*f32`. Strings are u32-length-prefixed
//! UTF-8.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hopfield::PatternMatrix;
use crate::metrics::NUM_DISEASES;
use crate::numerics::{Matrix, Vector};

pub const BANK_MAGIC: [u8; 8] = *b"AMMRGBNK";
pub const BANK_VERSION: u16 = 1;

/// Patch grid on a 224x224 image with 16x16 patches.
pub const MAX_PATCH_INDEX: u32 = 195;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankKind {
    Visual = 0,
    Report = 1,
}

impl BankKind {
    fn from_byte(b: u8, offset: u64) -> Result<Self> {
        match b {
            0 => Ok(Self::Visual),
            1 => Ok(Self::Report),
            other => Err(Error::Parse {
                offset,
                message: format!("unknown bank kind {other}"),
            }),
        }
    }
}

/// One patch-level feature mined from a masked image.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualBankEntry {
    pub feature: Vector,
    pub disease_id: u8,
    pub source_image_id: String,
    pub patch_index: u32,
}

impl VisualBankEntry {
    pub fn new(feature: Vector, disease_id: u8, source_image_id: String, patch_index: u32) -> Result<Self> {
        if usize::from(disease_id) >= NUM_DISEASES {
            return Err(Error::InvalidInput(format!(
                "disease_id {disease_id} out of range 0..{NUM_DISEASES}"
            )));
        }
        if patch_index > MAX_PATCH_INDEX {
            return Err(Error::InvalidInput(format!(
                "patch_index {patch_index} out of range 0..={MAX_PATCH_INDEX}"
            )));
        }
        Ok(Self { feature, disease_id, source_image_id, patch_index })
    }
}

/// A visual-bank candidate together with the activation score that ranks it.
#[derive(Debug, Clone)]
pub struct ScoredVisualCandidate {
    pub entry: VisualBankEntry,
    pub activation: f64,
}

/// One sentence-level feature from an encoded report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportMemoryEntry {
    pub feature: Vector,
    pub sentence_text: String,
    /// Multi-hot over the 14 disease labels, bit j = disease j.
    pub disease_labels: u16,
    pub source_report_id: String,
}

impl ReportMemoryEntry {
    pub fn new(
        feature: Vector,
        sentence_text: String,
        disease_labels: u16,
        source_report_id: String,
    ) -> Result<Self> {
        if sentence_text.is_empty() {
            return Err(Error::InvalidInput("sentence_text must be non-empty".into()));
        }
        if disease_labels >= 1 << NUM_DISEASES {
            return Err(Error::InvalidInput(format!(
                "disease_labels {disease_labels:#x} uses bits beyond the {NUM_DISEASES} diseases"
            )));
        }
        Ok(Self { feature, sentence_text, disease_labels, source_report_id })
    }

    /// Group used for proportional apportionment: the lowest-numbered
    /// positive label, or `NUM_DISEASES` for unlabeled sentences.
    pub fn apportionment_group(&self) -> usize {
        if self.disease_labels == 0 {
            NUM_DISEASES
        } else {
            self.disease_labels.trailing_zeros() as usize
        }
    }
}

/// Disease-aware visual bank, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualBank {
    dim: usize,
    entries: Vec<VisualBankEntry>,
}

/// Report memory, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportMemory {
    dim: usize,
    entries: Vec<ReportMemoryEntry>,
}

/// Largest-remainder apportionment of `total` units proportional to
/// `counts`. Quotas sum to `min(total, sum(counts))` and never exceed the
/// corresponding count. Ties on the fractional remainder go to the lower
/// index.
pub fn apportion(counts: &[usize], total: usize) -> Vec<usize> {
    let supply: usize = counts.iter().sum();
    if supply == 0 {
        return vec![0; counts.len()];
    }
    if total >= supply {
        return counts.to_vec();
    }
    let mut quotas: Vec<usize> = Vec::with_capacity(counts.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(counts.len());
    let mut assigned = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        let share = total as f64 * c as f64 / supply as f64;
        let floor = share.floor() as usize;
        quotas.push(floor);
        assigned += floor;
        remainders.push((i, share - floor as f64));
    }
    // Descending remainder, ascending index on ties.
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut leftover = total - assigned;
    for (i, _) in remainders {
        if leftover == 0 {
            break;
        }
        if quotas[i] < counts[i] {
            quotas[i] += 1;
            leftover -= 1;
        }
    }
    quotas
}

/// Builds the visual bank, keeping at most `cap_per_disease` entries per
/// disease. Entries are ranked by descending activation score with ties
/// broken by `(source_image_id, patch_index)` lexicographic order, and stored
/// grouped by ascending disease id.
pub fn build_visual_bank(
    candidates: Vec<ScoredVisualCandidate>,
    cap_per_disease: usize,
) -> Result<VisualBank> {
    if cap_per_disease == 0 {
        return Err(Error::InvalidInput("cap_per_disease must be at least 1".into()));
    }
    let dim = candidates.first().map_or(0, |c| c.entry.feature.dim());
    for c in &candidates {
        if c.entry.feature.dim() != dim {
            return Err(Error::Dimension(format!(
                "visual candidate feature dimension {} differs from {dim}",
                c.entry.feature.dim()
            )));
        }
        if !c.activation.is_finite() {
            return Err(Error::NonFinite("visual candidate activation score".into()));
        }
    }
    let mut groups: Vec<Vec<ScoredVisualCandidate>> = (0..NUM_DISEASES).map(|_| Vec::new()).collect();
    for c in candidates {
        groups[usize::from(c.entry.disease_id)].push(c);
    }
    let mut entries = Vec::new();
    for group in &mut groups {
        group.sort_by(|a, b| {
            b.activation
                .partial_cmp(&a.activation)
                .unwrap()
                .then_with(|| a.entry.source_image_id.cmp(&b.entry.source_image_id))
                .then_with(|| a.entry.patch_index.cmp(&b.entry.patch_index))
        });
        entries.extend(group.drain(..).take(cap_per_disease).map(|c| c.entry));
    }
    Ok(VisualBank { dim, entries })
}

/// Builds the report memory under a global size budget. Per-group quotas are
/// proportional to candidate counts via largest-remainder apportionment;
/// within a group the earliest candidates in input order are kept. Groups are
/// the lowest positive label of each entry, with unlabeled sentences forming
/// a trailing group of their own.
pub fn build_report_memory(candidates: Vec<ReportMemoryEntry>, total_size: usize) -> Result<ReportMemory> {
    if total_size == 0 {
        return Err(Error::InvalidInput("total_size must be at least 1".into()));
    }
    let dim = candidates.first().map_or(0, |c| c.feature.dim());
    for c in &candidates {
        if c.feature.dim() != dim {
            return Err(Error::Dimension(format!(
                "report candidate feature dimension {} differs from {dim}",
                c.feature.dim()
            )));
        }
    }
    let n_groups = NUM_DISEASES + 1;
    let mut groups: Vec<Vec<ReportMemoryEntry>> = (0..n_groups).map(|_| Vec::new()).collect();
    for c in candidates {
        let g = c.apportionment_group();
        groups[g].push(c);
    }
    let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
    let quotas = apportion(&counts, total_size);
    let mut entries = Vec::new();
    for (group, quota) in groups.iter_mut().zip(quotas) {
        entries.extend(group.drain(..).take(quota));
    }
    Ok(ReportMemory { dim, entries })
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    fn read_bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let start = self.offset;
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|_| Error::Parse {
            offset: start,
            message: format!("unexpected end of file reading {what}"),
        })?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn read_u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.read_bytes(1, what)?[0])
    }

    fn read_u16(&mut self, what: &str) -> Result<u16> {
        let b = self.read_bytes(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let b = self.read_bytes(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn read_u64(&mut self, what: &str) -> Result<u64> {
        let b = self.read_bytes(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn read_string(&mut self, what: &str) -> Result<String> {
        let len = self.read_u32(what)? as usize;
        let start = self.offset;
        let bytes = self.read_bytes(len, what)?;
        String::from_utf8(bytes).map_err(|_| Error::Parse {
            offset: start,
            message: format!("{what} is not valid UTF-8"),
        })
    }

    fn read_feature(&mut self, dim: usize, what: &str) -> Result<Vector> {
        let bytes = self.read_bytes(dim * 4, what)?;
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Vector::new(values)
    }

    fn expect_eof(&mut self, count: u64) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Parse {
                offset: self.offset,
                message: format!("trailing data after the {count} entries declared in the header"),
            }),
            Err(e) => Err(Error::Io(e)),
        }
    }
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn write_feature<W: Write>(w: &mut W, feature: &Vector) -> Result<()> {
    for v in feature.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn write_header<W: Write>(w: &mut W, kind: BankKind, dim: usize, count: usize) -> Result<()> {
    w.write_all(&BANK_MAGIC)?;
    w.write_all(&BANK_VERSION.to_le_bytes())?;
    w.write_all(&[kind as u8])?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(count as u64).to_le_bytes())?;
    Ok(())
}

fn read_header<R: Read>(r: &mut CountingReader<R>, expect: BankKind) -> Result<(usize, u64)> {
    let magic = r.read_bytes(8, "magic")?;
    if magic != BANK_MAGIC {
        return Err(Error::Parse { offset: 0, message: "bad magic, not a bank file".into() });
    }
    let version_offset = r.offset;
    let version = r.read_u16("version")?;
    if version != BANK_VERSION {
        return Err(Error::Parse {
            offset: version_offset,
            message: format!("unsupported bank version {version}"),
        });
    }
    let kind_offset = r.offset;
    let kind = BankKind::from_byte(r.read_u8("kind")?, kind_offset)?;
    if kind != expect {
        return Err(Error::Parse {
            offset: kind_offset,
            message: format!("expected {expect:?} bank, found {kind:?}"),
        });
    }
    let dim = r.read_u32("dim")? as usize;
    let count = r.read_u64("count")?;
    Ok((dim, count))
}

/// Reads only the kind byte of a bank file, for format auto-detection.
pub fn peek_bank_kind<P: AsRef<Path>>(path: P) -> Result<BankKind> {
    let mut r = CountingReader::new(BufReader::new(File::open(path)?));
    let magic = r.read_bytes(8, "magic")?;
    if magic != BANK_MAGIC {
        return Err(Error::Parse { offset: 0, message: "bad magic, not a bank file".into() });
    }
    r.read_u16("version")?;
    let kind_offset = r.offset;
    BankKind::from_byte(r.read_u8("kind")?, kind_offset)
}

impl VisualBank {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VisualBankEntry] {
        &self.entries
    }

    pub fn count_for_disease(&self, disease_id: u8) -> usize {
        self.entries.iter().filter(|e| e.disease_id == disease_id).count()
    }

    /// Stacks entry features as pattern rows in storage order, optionally
    /// restricted to one disease.
    pub fn as_pattern_matrix(&self, disease_filter: Option<u8>) -> Result<PatternMatrix> {
        let rows: Vec<Vector> = self
            .entries
            .iter()
            .filter(|e| disease_filter.is_none_or(|d| e.disease_id == d))
            .map(|e| e.feature.clone())
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyMemory(match disease_filter {
                Some(d) => format!("visual bank has no entries for disease {d}"),
                None => "visual bank is empty".into(),
            }));
        }
        PatternMatrix::from_rows(&rows)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_header(&mut w, BankKind::Visual, self.dim, self.entries.len())?;
        for e in &self.entries {
            w.write_all(&[e.disease_id])?;
            w.write_all(&e.patch_index.to_le_bytes())?;
            write_string(&mut w, &e.source_image_id)?;
            write_feature(&mut w, &e.feature)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut r = CountingReader::new(BufReader::new(File::open(path)?));
        let (dim, count) = read_header(&mut r, BankKind::Visual)?;
        let mut entries = Vec::with_capacity(count as usize);
        for i in 0..count {
            let what = format!("visual entry {i}");
            let disease_id = r.read_u8(&what)?;
            let patch_index = r.read_u32(&what)?;
            let source_image_id = r.read_string(&what)?;
            let feature = r.read_feature(dim, &what)?;
            entries.push(VisualBankEntry::new(feature, disease_id, source_image_id, patch_index)?);
        }
        r.expect_eof(count)?;
        Ok(Self { dim, entries })
    }
}

impl ReportMemory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ReportMemoryEntry] {
        &self.entries
    }

    /// Stacks entry features as pattern rows in storage order, optionally
    /// restricted to sentences carrying one disease label.
    pub fn as_pattern_matrix(&self, disease_filter: Option<u8>) -> Result<PatternMatrix> {
        let rows: Vec<Vector> = self
            .entries
            .iter()
            .filter(|e| disease_filter.is_none_or(|d| e.disease_labels & (1 << d) != 0))
            .map(|e| e.feature.clone())
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyMemory(match disease_filter {
                Some(d) => format!("report memory has no entries labeled with disease {d}"),
                None => "report memory is empty".into(),
            }));
        }
        PatternMatrix::from_rows(&rows)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_header(&mut w, BankKind::Report, self.dim, self.entries.len())?;
        for e in &self.entries {
            w.write_all(&e.disease_labels.to_le_bytes())?;
            write_string(&mut w, &e.source_report_id)?;
            write_string(&mut w, &e.sentence_text)?;
            write_feature(&mut w, &e.feature)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut r = CountingReader::new(BufReader::new(File::open(path)?));
        let (dim, count) = read_header(&mut r, BankKind::Report)?;
        let mut entries = Vec::with_capacity(count as usize);
        for i in 0..count {
            let what = format!("report entry {i}");
            let disease_labels = r.read_u16(&what)?;
            let source_report_id = r.read_string(&what)?;
            let sentence_text = r.read_string(&what)?;
            let feature = r.read_feature(dim, &what)?;
            entries.push(ReportMemoryEntry::new(feature, sentence_text, disease_labels, source_report_id)?);
        }
        r.expect_eof(count)?;
        Ok(Self { dim, entries })
    }
}

/// Builds a pattern matrix from report memory entries plus the parallel
/// vector of entry indices, used when the caller needs to map retrieval
/// weights back to sentences.
pub fn report_patterns_with_indices(
    memory: &ReportMemory,
    disease_filter: Option<u8>,
) -> Result<(PatternMatrix, Vec<usize>)> {
    let mut rows = Vec::new();
    let mut indices = Vec::new();
    for (i, e) in memory.entries().iter().enumerate() {
        if disease_filter.is_none_or(|d| e.disease_labels & (1 << d) != 0) {
            rows.push(e.feature.clone());
            indices.push(i);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyMemory("report memory selection is empty".into()));
    }
    Ok((PatternMatrix::from_rows(&rows)?, indices))
}

/// Visual-bank analogue of [`report_patterns_with_indices`].
pub fn visual_patterns_with_indices(
    bank: &VisualBank,
    disease_filter: Option<u8>,
) -> Result<(PatternMatrix, Vec<usize>)> {
    let mut rows = Vec::new();
    let mut indices = Vec::new();
    for (i, e) in bank.entries().iter().enumerate() {
        if disease_filter.is_none_or(|d| e.disease_id == d) {
            rows.push(e.feature.clone());
            indices.push(i);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyMemory("visual bank selection is empty".into()));
    }
    Ok((PatternMatrix::from_rows(&rows)?, indices))
}

/// Convenience for tests and the CLI: a bank-shaped matrix view.
pub fn matrix_of(bank: &VisualBank) -> Result<Matrix> {
    Ok(bank.as_pattern_matrix(None)?.as_matrix().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(v: &[f64]) -> Vector {
        Vector::new(v.to_vec()).unwrap()
    }

    fn cand(disease: u8, img: &str, patch: u32, score: f64) -> ScoredVisualCandidate {
        ScoredVisualCandidate {
            entry: VisualBankEntry::new(feat(&[score, 1.0]), disease, img.into(), patch).unwrap(),
            activation: score,
        }
    }

    #[test]
    fn apportion_matches_hand_computation() {
        assert_eq!(apportion(&[50, 30, 20], 10), vec![5, 3, 2]);
        assert_eq!(apportion(&[7], 3), vec![3]);
        assert_eq!(apportion(&[2, 2], 100), vec![2, 2]);
        assert_eq!(apportion(&[0, 5, 0], 2), vec![0, 2, 0]);
    }

    #[test]
    fn apportion_quota_is_exact_and_bounded() {
        // Independent oracle: brute-force check of the largest-remainder
        // definition on a grid of inputs.
        let cases: Vec<(Vec<usize>, usize)> = vec![
            (vec![3, 3, 3], 7),
            (vec![1, 2, 3, 4], 6),
            (vec![10, 1, 1], 5),
            (vec![9, 9, 2], 13),
        ];
        for (counts, total) in cases {
            let q = apportion(&counts, total);
            let supply: usize = counts.iter().sum();
            assert_eq!(q.iter().sum::<usize>(), total.min(supply));
            for (qi, ci) in q.iter().zip(&counts) {
                assert!(qi <= ci);
                // No unit can be moved from a lower-remainder group to a
                // higher-remainder group: floors are respected.
                let share = total as f64 * *ci as f64 / supply as f64;
                assert!(*qi >= share.floor() as usize && *qi <= share.floor() as usize + 1);
            }
        }
    }

    #[test]
    fn visual_bank_keeps_highest_scores_up_to_cap() {
        let bank = build_visual_bank(
            vec![
                cand(2, "img-a", 4, 0.2),
                cand(2, "img-b", 1, 0.9),
                cand(2, "img-c", 7, 0.5),
            ],
            2,
        )
        .unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank.entries()[0].source_image_id, "img-b");
        assert_eq!(bank.entries()[1].source_image_id, "img-c");
    }

    #[test]
    fn visual_bank_cap_larger_than_supply_keeps_everything() {
        let bank = build_visual_bank(vec![cand(0, "a", 0, 0.1), cand(5, "b", 3, 0.4)], 500).unwrap();
        assert_eq!(bank.len(), 2);
        for d in 0..NUM_DISEASES as u8 {
            let supply = usize::from(d == 0 || d == 5);
            assert_eq!(bank.count_for_disease(d), supply.min(500));
        }
    }

    #[test]
    fn visual_bank_tie_break_is_lexicographic() {
        let bank = build_visual_bank(
            vec![cand(1, "z", 0, 0.5), cand(1, "a", 9, 0.5), cand(1, "a", 2, 0.5)],
            2,
        )
        .unwrap();
        assert_eq!(bank.entries()[0].source_image_id, "a");
        assert_eq!(bank.entries()[0].patch_index, 2);
        assert_eq!(bank.entries()[1].patch_index, 9);
    }

    #[test]
    fn cap_500_totals_follow_supply_exhaustion() {
        // With eight diseases at or above the cap and six below it, the bank
        // total is the sum of min(cap, supply); this supply profile lands on
        // the reference total of 6943.
        let supplies: [usize; NUM_DISEASES] =
            [620, 510, 800, 505, 1200, 530, 700, 999, 490, 489, 488, 492, 493, 491];
        let mut candidates = Vec::new();
        for (d, &supply) in supplies.iter().enumerate() {
            for i in 0..supply {
                candidates.push(ScoredVisualCandidate {
                    entry: VisualBankEntry::new(
                        feat(&[d as f64]),
                        d as u8,
                        format!("img{i:05}"),
                        (i % 196) as u32,
                    )
                    .unwrap(),
                    activation: (i % 97) as f64 / 97.0,
                });
            }
        }
        let bank = build_visual_bank(candidates, 500).unwrap();
        let expected: usize = supplies.iter().map(|s| (*s).min(500)).sum();
        assert_eq!(expected, 6943);
        assert_eq!(bank.len(), 6943);
        for (d, &supply) in supplies.iter().enumerate() {
            assert_eq!(bank.count_for_disease(d as u8), supply.min(500));
        }
    }

    #[test]
    fn empty_candidate_list_gives_empty_bank() {
        let bank = build_visual_bank(Vec::new(), 500).unwrap();
        assert!(bank.is_empty());
        assert!(bank.as_pattern_matrix(None).is_err());
    }

    fn report_entry(text: &str, labels: u16, id: &str) -> ReportMemoryEntry {
        ReportMemoryEntry::new(feat(&[labels as f64, 1.0]), text.into(), labels, id.into()).unwrap()
    }

    #[test]
    fn report_memory_single_group_and_oversized_budget() {
        let cands: Vec<_> = (0..4).map(|i| report_entry(&format!("s{i}"), 1 << 3, "r")).collect();
        let mem = build_report_memory(cands.clone(), 2).unwrap();
        assert_eq!(mem.len(), 2);
        assert_eq!(mem.entries()[0].sentence_text, "s0");

        let mem = build_report_memory(cands, 100).unwrap();
        assert_eq!(mem.len(), 4);
    }

    #[test]
    fn report_memory_multi_label_counts_toward_lowest_label() {
        let e = report_entry("multi", (1 << 2) | (1 << 9), "r");
        assert_eq!(e.apportionment_group(), 2);
        let unlabeled = report_entry("none", 0, "r");
        assert_eq!(unlabeled.apportionment_group(), NUM_DISEASES);
    }

    #[test]
    fn pattern_matrix_filter_preserves_order() {
        let bank = build_visual_bank(
            vec![cand(3, "a", 1, 0.9), cand(1, "b", 2, 0.8), cand(3, "c", 3, 0.7)],
            10,
        )
        .unwrap();
        let m = bank.as_pattern_matrix(Some(3)).unwrap();
        assert_eq!(m.count(), 2);
        assert_eq!(m.row(0)[0], 0.9);
        assert_eq!(m.row(1)[0], 0.7);
        assert!(bank.as_pattern_matrix(Some(9)).is_err());
        assert_eq!(bank.as_pattern_matrix(None).unwrap().count(), 3);
    }
}
