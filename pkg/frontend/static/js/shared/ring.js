/** Fixed-capacity ring buffer; memory stays bounded however long the
 * stream runs. */
export class RingBuffer {
    capacity;
    items;
    head = 0;
    count = 0;
    constructor(capacity) {
        this.capacity = capacity;
        if (capacity < 1)
            throw new Error("capacity must be >= 1");
        this.items = new Array(capacity);
    }
    push(item) {
        this.items[(this.head + this.count) % this.capacity] = item;
        if (this.count < this.capacity) {
            this.count += 1;
        }
        else {
            this.head = (this.head + 1) % this.capacity;
        }
    }
    get length() {
        return this.count;
    }
    last() {
        if (this.count === 0)
            return undefined;
        return this.items[(this.head + this.count - 1) % this.capacity];
    }
    toArray() {
        const out = new Array(this.count);
        for (let i = 0; i < this.count; i++) {
            out[i] = this.items[(this.head + i) % this.capacity];
        }
        return out;
    }
    clear() {
        this.head = 0;
        this.count = 0;
        this.items.fill(undefined);
    }
}
