//! Permutations of `{0, …, n−1}` indexed in lexicographic order.

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// All permutations of `n` points, lexicographic; index 0 is the identity.
pub fn permutations(n: usize) -> Vec<Vec<u8>> {
    let mut cur: Vec<u8> = (0..n as u8).collect();
    let mut out = vec![cur.clone()];
    // Next lexicographic permutation until exhausted.
    loop {
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else { return out };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// `(p ∘ q)(x) = p(q(x))`.
pub fn compose(p: &[u8], q: &[u8]) -> Vec<u8> {
    q.iter().map(|&x| p[x as usize]).collect()
}

/// Composition table of S_n over lexicographic indices: `table[i][j] = index(p_i ∘ p_j)`.
pub fn composition_table(n: usize) -> Vec<Vec<u16>> {
    let perms = permutations(n);
    let index = |p: &[u8]| perms.iter().position(|q| q == p).unwrap() as u16;
    perms.iter().map(|p| perms.iter().map(|q| index(&compose(p, q))).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_order() {
        for n in 1..=5 {
            assert_eq!(permutations(n).len(), factorial(n));
        }
        assert_eq!(
            permutations(3),
            vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 0, 2], vec![1, 2, 0], vec![2, 0, 1], vec![2, 1, 0]]
        );
    }

    #[test]
    fn s3_is_not_commutative() {
        let t = composition_table(3);
        for i in 0..6 {
            assert_eq!((t[i][0], t[0][i]), (i as u16, i as u16));
        }
        assert_ne!(t[1][2], t[2][1]);
    }
}
