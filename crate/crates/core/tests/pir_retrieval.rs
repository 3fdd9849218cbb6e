use pkd::crypto::client_keygen;
use pkd::pir::{answer, build_library, decode, default_chunk_bits, make_query, PirQuery, PirResponse};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
fn every_index_of_a_small_library_roundtrips_over_the_wire() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let (pk, sk) = client_keygen(512, &mut rng).unwrap();
    let items: Vec<Vec<u8>> = (0..12)
        .map(|_| {
            let mut b = vec![0u8; 300];
            rng.fill_bytes(&mut b);
            b
        })
        .collect();
    let y = default_chunk_bits(&pk, items.len());
    let lib = build_library(&items, y, pk.plaintext_bits()).unwrap();
    for (i, item) in items.iter().enumerate() {
        let q = make_query(&pk, i, items.len(), &mut rng).unwrap();
        let q = PirQuery::from_wire(&q.to_wire(), pk.clone()).unwrap();
        let resp = PirResponse::from_wire(&answer(&q, &lib).unwrap().to_wire()).unwrap();
        assert_eq!(&decode(&sk, &resp, y, item.len()).unwrap(), item);
    }
}

#[test]
fn query_for_a_missing_index_is_rejected() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let (pk, _) = client_keygen(512, &mut rng).unwrap();
    assert!(make_query(&pk, 4, 4, &mut rng).is_err());
}
