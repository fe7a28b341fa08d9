use crate::embed::{cosine, NameEmbedding};

/// What the naming strategies need to know about one community member.
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub record_id: &'a str,
    pub raw_name: &'a str,
    pub cleaned: &'a str,
    pub patent_count: u64,
    pub embedding: Option<&'a NameEmbedding>,
}

const TIE_EPS: f64 = 1e-12;

/// The member whose mean cosine to all other members is largest; ties go to
/// the lexicographically smallest cleaned name. Degenerate embeddings are left
/// out. Returns `None` when no member has a usable embedding.
pub fn name_community_centroid<'a>(members: &[Member<'a>]) -> Option<Member<'a>> {
    let usable: Vec<(&Member<'a>, &NameEmbedding)> = members
        .iter()
        .filter_map(|m| m.embedding.filter(|e| !e.degenerate).map(|e| (m, e)))
        .collect();
    if usable.is_empty() {
        return None;
    }
    if usable.len() == 1 {
        return Some(*usable[0].0);
    }
    let mut best: Option<(f64, &Member<'a>)> = None;
    for (i, (m, e)) in usable.iter().enumerate() {
        let total: f64 = usable
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (_, o))| cosine(&e.vector, &o.vector).unwrap_or(0.0))
            .sum();
        let mean = total / (usable.len() - 1) as f64;
        best = match best {
            None => Some((mean, m)),
            Some((b, bm)) => {
                if mean > b + TIE_EPS || ((mean - b).abs() <= TIE_EPS && tie_key(m) < tie_key(bm)) {
                    Some((mean, m))
                } else {
                    Some((b, bm))
                }
            }
        };
    }
    best.map(|(_, m)| *m)
}

/// The member with the most patents; ties (including all zero) go to the
/// lexicographically smallest name.
pub fn name_community_volume<'a>(members: &[Member<'a>]) -> Option<Member<'a>> {
    members
        .iter()
        .min_by(|a, b| b.patent_count.cmp(&a.patent_count).then_with(|| tie_key(a).cmp(&tie_key(b))))
        .copied()
}

fn tie_key<'a>(m: &Member<'a>) -> (&'a str, &'a str, &'a str) {
    (m.cleaned, m.raw_name, m.record_id)
}
