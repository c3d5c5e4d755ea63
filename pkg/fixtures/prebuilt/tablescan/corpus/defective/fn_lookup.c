__int64 __fastcall fn_lookup(struct table *a1, int a2)
{
  int i; // [rsp+8h]

  if ( !a1 )
    JUMPOUT(0x1350LL);
  for ( i = 0; i < a1->count; ++i )
  {
    if ( a1->slots[i].key == a2 )
      return (unsigned int)a1->slots[i].val;
  }
  return 0xFFFFFFFFLL;
}
