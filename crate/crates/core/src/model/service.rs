use serde::{Deserialize, Serialize};

use super::{ModelError, PayloadTable, ServiceId, TypeId, HEAD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Request,
    Response,
}

/// One event of a service execution: a request `from -> to`, or the response
/// travelling back `from -> to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Invocation {
    pub from: TypeId,
    pub to: TypeId,
    pub direction: Direction,
}

impl Invocation {
    pub fn request(from: TypeId, to: TypeId) -> Self {
        Invocation { from, to, direction: Direction::Request }
    }

    pub fn response(from: TypeId, to: TypeId) -> Self {
        Invocation { from, to, direction: Direction::Response }
    }
}

/// A type-level call edge of a service with its multiplicity and payloads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Call {
    pub caller: TypeId,
    pub callee: TypeId,
    pub count: u32,
    pub request_kb: f64,
    pub response_kb: f64,
}

/// A service compiled into request/response count matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ServiceSpec {
    id: ServiceId,
    weight: f64,
    events: Vec<Invocation>,
    request: Vec<Vec<u32>>,
    response: Vec<Vec<u32>>,
    payload_req: Vec<Vec<f64>>,
    payload_res: Vec<Vec<f64>>,
    calls: Vec<Call>,
}

impl ServiceSpec {
    pub fn id(&self) -> ServiceId {
        self.id
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn events(&self) -> &[Invocation] {
        &self.events
    }

    /// `F[i][j]`: number of requests from type `i` to type `j` per execution.
    pub fn request_matrix(&self) -> &[Vec<u32>] {
        &self.request
    }

    /// `R[i][j]`: number of responses from type `i` to type `j`; the transpose
    /// of the request matrix.
    pub fn response_matrix(&self) -> &[Vec<u32>] {
        &self.response
    }

    /// Kilobytes per request from `i` to `j` (zero where no request exists).
    pub fn payload_req(&self) -> &[Vec<f64>] {
        &self.payload_req
    }

    /// Kilobytes per response from `i` back to `j` (zero where none exists).
    pub fn payload_res(&self) -> &[Vec<f64>] {
        &self.payload_res
    }

    /// Nonzero request-matrix entries in row-major order.
    pub fn calls(&self) -> &[Call] {
        &self.calls
    }

    /// Types the service touches, excluding the head, in order of first request.
    pub fn invoked_types(&self) -> Vec<TypeId> {
        let mut seen = Vec::new();
        for e in &self.events {
            if e.direction == Direction::Request && !seen.contains(&e.to) {
                seen.push(e.to);
            }
        }
        seen
    }

    /// Caller type of the first request to `t`.
    pub fn front_end(&self, t: TypeId) -> Option<TypeId> {
        self.events
            .iter()
            .find(|e| e.direction == Direction::Request && e.to == t)
            .map(|e| e.from)
    }
}

/// Compiles an invocation sequence into matrix form.
///
/// The sequence must open with a request from the head, nest properly (every
/// request is answered by the matching response before its caller continues)
/// and end with the response back to the head.
pub fn compile_service(
    id: ServiceId,
    weight: f64,
    events: &[Invocation],
    type_count: usize,
    payloads: &PayloadTable,
) -> Result<ServiceSpec, ModelError> {
    let unbalanced = |index: usize, reason: &str| ModelError::UnbalancedSequence { index, reason: reason.into() };

    let mut request = vec![vec![0u32; type_count]; type_count];
    let mut stack: Vec<TypeId> = vec![HEAD];
    let mut closed = false;
    for (index, e) in events.iter().enumerate() {
        if e.from >= type_count {
            return Err(ModelError::UnknownType(e.from));
        }
        if e.to >= type_count {
            return Err(ModelError::UnknownType(e.to));
        }
        if e.from == e.to {
            return Err(ModelError::SelfInvocation(e.from));
        }
        if closed {
            return Err(unbalanced(index, "event after the head's response"));
        }
        let top = *stack.last().expect("stack holds the head until closed");
        match e.direction {
            Direction::Request => {
                if index == 0 && e.from != HEAD {
                    return Err(unbalanced(index, "sequence must start at the head"));
                }
                if e.from != top {
                    return Err(unbalanced(index, "request from a type that is not active"));
                }
                if e.to == HEAD {
                    return Err(unbalanced(index, "request back into the head"));
                }
                if stack.len() > 1 && e.from == HEAD {
                    return Err(unbalanced(index, "head issues a second request"));
                }
                request[e.from][e.to] += 1;
                stack.push(e.to);
            }
            Direction::Response => {
                if index == 0 {
                    return Err(unbalanced(index, "sequence must start with a request"));
                }
                let caller = stack.len().checked_sub(2).map(|i| stack[i]);
                if e.from != top || Some(e.to) != caller {
                    return Err(unbalanced(index, "response without a matching open request"));
                }
                stack.pop();
                if stack.len() == 1 {
                    closed = true;
                }
            }
        }
    }
    if !closed {
        return Err(unbalanced(events.len(), "unterminated requests"));
    }

    let mut response = vec![vec![0u32; type_count]; type_count];
    let mut payload_req = vec![vec![0.0; type_count]; type_count];
    let mut payload_res = vec![vec![0.0; type_count]; type_count];
    let mut calls = Vec::new();
    for caller in 0..type_count {
        for callee in 0..type_count {
            let count = request[caller][callee];
            response[callee][caller] = count;
            if count == 0 {
                continue;
            }
            let p = payloads.get(caller, callee).ok_or(ModelError::MissingPayload { caller, callee })?;
            payload_req[caller][callee] = p.request_kb;
            payload_res[callee][caller] = p.response_kb;
            calls.push(Call { caller, callee, count, request_kb: p.request_kb, response_kb: p.response_kb });
        }
    }

    Ok(ServiceSpec {
        id,
        weight,
        events: events.to_vec(),
        request,
        response,
        payload_req,
        payload_res,
        calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(a: TypeId, b: TypeId) -> Invocation {
        Invocation::request(a, b)
    }

    fn r(a: TypeId, b: TypeId) -> Invocation {
        Invocation::response(a, b)
    }

    fn uniform_payloads(types: usize) -> PayloadTable {
        let mut t = PayloadTable::new();
        for i in 0..types {
            for j in 0..types {
                if i != j {
                    t.insert(i, j, 10.0 + i as f64, 20.0 + j as f64);
                }
            }
        }
        t
    }

    #[test]
    fn minimal_service() {
        let s = compile_service(0, 1.0, &[f(0, 1), r(1, 0)], 2, &uniform_payloads(2)).unwrap();
        assert_eq!(s.request_matrix(), &[vec![0, 1], vec![0, 0]]);
        assert_eq!(s.response_matrix(), &[vec![0, 0], vec![1, 0]]);
        assert_eq!(s.calls().len(), 1);
    }

    #[test]
    fn response_payload_is_indexed_responder_first() {
        let s = compile_service(0, 1.0, &[f(0, 1), r(1, 0)], 2, &uniform_payloads(2)).unwrap();
        assert_eq!(s.payload_req()[0][1], 10.0);
        assert_eq!(s.payload_res()[1][0], 21.0);
    }

    #[test]
    fn unbalanced_sequences_are_rejected() {
        let p = uniform_payloads(4);
        let cases: Vec<Vec<Invocation>> = vec![
            vec![],
            vec![f(0, 1)],
            vec![r(1, 0)],
            vec![f(1, 2), r(2, 1)],
            vec![f(0, 1), f(1, 2), r(1, 0)],
            vec![f(0, 1), r(2, 1), r(1, 0)],
            vec![f(0, 1), r(1, 0), f(0, 2), r(2, 0)],
            vec![f(0, 1), f(1, 2), f(1, 3), r(3, 1), r(2, 1), r(1, 0)],
            vec![f(0, 1), f(1, 0), r(0, 1), r(1, 0)],
        ];
        for events in cases {
            let err = compile_service(0, 1.0, &events, 4, &p).unwrap_err();
            assert!(matches!(err, ModelError::UnbalancedSequence { .. }), "{events:?} -> {err:?}");
        }
    }

    #[test]
    fn unknown_and_self_types() {
        let p = uniform_payloads(3);
        assert_eq!(
            compile_service(0, 1.0, &[f(0, 5), r(5, 0)], 3, &p).unwrap_err(),
            ModelError::UnknownType(5)
        );
        assert_eq!(
            compile_service(0, 1.0, &[f(0, 1), f(1, 1), r(1, 1), r(1, 0)], 3, &p).unwrap_err(),
            ModelError::SelfInvocation(1)
        );
    }

    #[test]
    fn front_end_and_invoked_order() {
        let p = uniform_payloads(4);
        let s = compile_service(0, 1.0, &[f(0, 2), f(2, 1), f(1, 3), r(3, 1), r(1, 2), f(2, 3), r(3, 2), r(2, 0)], 4, &p)
            .unwrap();
        assert_eq!(s.invoked_types(), vec![2, 1, 3]);
        assert_eq!(s.front_end(3), Some(1));
        assert_eq!(s.front_end(2), Some(0));
    }

    /// Random call tree over `types` distinct ids, linearized depth-first.
    fn nested_events(parents: &[usize], types: &[TypeId]) -> Vec<Invocation> {
        fn walk(node: usize, children: &[Vec<usize>], types: &[TypeId], out: &mut Vec<Invocation>) {
            for &c in &children[node] {
                out.push(Invocation::request(types[node], types[c]));
                walk(c, children, types, out);
                out.push(Invocation::response(types[c], types[node]));
            }
        }
        let mut children = vec![Vec::new(); types.len()];
        for (child, &parent) in parents.iter().enumerate() {
            children[parent].push(child + 1);
        }
        let mut out = Vec::new();
        walk(0, &children, types, &mut out);
        out
    }

    proptest! {
        #[test]
        fn multiset_recount_and_transpose(
            perm in Just((1..9usize).collect::<Vec<_>>()).prop_shuffle(),
            size in 5usize..=8,
            seeds in proptest::collection::vec(0usize..1000, 8),
        ) {
            // types[0] is the head; node k>1 picks a parent among 1..k.
            let mut types = vec![HEAD];
            types.extend(perm.iter().take(size));
            let mut parents = vec![0usize];
            for k in 2..=size {
                parents.push(1 + seeds[k - 2] % (k - 1));
            }
            let events = nested_events(&parents, &types);
            let s = compile_service(0, 1.0, &events, 9, &uniform_payloads(9)).unwrap();

            let mut recount = vec![vec![0u32; 9]; 9];
            let mut requests = 0u32;
            for e in &events {
                if e.direction == Direction::Request {
                    recount[e.from][e.to] += 1;
                    requests += 1;
                }
            }
            prop_assert_eq!(s.request_matrix(), &recount[..]);
            let total: u32 = s.request_matrix().iter().flatten().sum();
            prop_assert_eq!(total, requests);
            for i in 0..9 {
                for j in 0..9 {
                    prop_assert_eq!(s.response_matrix()[i][j], s.request_matrix()[j][i]);
                }
            }
            prop_assert_eq!(s.request_matrix()[0].iter().filter(|&&c| c > 0).count(), 1);
        }
    }
}
